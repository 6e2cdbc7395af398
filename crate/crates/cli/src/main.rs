fn main() {
    std::process::exit(oamcavity_cli::run(std::env::args_os()));
}
