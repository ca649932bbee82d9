fn main() {
    std::process::exit(star_cli::run(std::env::args_os()));
}
