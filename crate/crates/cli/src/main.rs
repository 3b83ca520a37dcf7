fn main() {
    std::process::exit(degroot_cli::run(std::env::args_os()));
}
