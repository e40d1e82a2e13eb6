fn main() {
    let code = cvp::cli::run(std::env::args_os());
    std::process::exit(code);
}
