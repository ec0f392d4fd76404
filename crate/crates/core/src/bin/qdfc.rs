fn main() {
    std::process::exit(qdfc::cli::main_from(std::env::args_os()));
}
