fn main() {
    std::process::exit(hardphase::cli::main_with(std::env::args_os()));
}
