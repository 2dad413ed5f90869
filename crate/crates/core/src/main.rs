fn main() {
    let code = bubble_core::cli::run(std::env::args_os());
    std::process::exit(code);
}
