fn main() {
    env_logger::init();
    std::process::exit(biorhythm::cli::run());
}
