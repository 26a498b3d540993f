fn main() {
    std::process::exit(streamsplat::cli::main_with_args(std::env::args_os()));
}
