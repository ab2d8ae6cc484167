fn main() {
    std::process::exit(cartan_heis::cli::main_with_args(std::env::args_os()));
}
