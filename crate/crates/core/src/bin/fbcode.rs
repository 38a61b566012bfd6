fn main() {
    std::process::exit(feedback_code::cli::run(std::env::args_os()));
}
