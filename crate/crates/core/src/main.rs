fn main() {
    std::process::exit(cardsep::cli::run(std::env::args_os()));
}
