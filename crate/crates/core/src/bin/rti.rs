fn main() {
    std::process::exit(rti_core::cli::run(std::env::args_os()));
}
