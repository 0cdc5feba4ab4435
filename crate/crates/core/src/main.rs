fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(ris_secrecy::cli::run_command(&args));
}
