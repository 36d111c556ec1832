fn main() {
    std::process::exit(tokenreduce::cli::run(std::env::args_os()));
}
