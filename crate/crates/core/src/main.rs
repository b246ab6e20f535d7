fn main() { std::process::exit(playpair::cli::run(std::env::args_os())); }
