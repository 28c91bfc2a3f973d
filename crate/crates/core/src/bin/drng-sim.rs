fn main() {
    std::process::exit(drng::cli::cli_main(std::env::args_os()));
}
