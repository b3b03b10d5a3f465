fn main() { std::process::exit(tempaudit::cli::run()) }
