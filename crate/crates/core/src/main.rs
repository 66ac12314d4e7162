fn main() {
    std::process::exit(stochapprox::cli::run(std::env::args_os()));
}
