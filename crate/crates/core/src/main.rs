fn main() {
    let code = bpsignal::cli::run_command(std::env::args_os());
    std::process::exit(code);
}
