fn main() {
    std::process::exit(fedmol::cli::cli_main(std::env::args_os()));
}
