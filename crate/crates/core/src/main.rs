fn main() {
    std::process::exit(triage_core::app::run(std::env::args_os()));
}
