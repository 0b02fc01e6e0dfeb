fn main() {
    std::process::exit(cdbandit::cli::run());
}
