fn main() {
    std::process::exit(bondnet_cli::run(std::env::args_os()));
}
