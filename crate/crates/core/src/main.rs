fn main() {
    std::process::exit(relayflow::cli::run(std::env::args_os()));
}
