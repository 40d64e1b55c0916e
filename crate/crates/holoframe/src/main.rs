fn main() {
    std::process::exit(holoframe::cli::run(std::env::args_os()));
}
