fn main() {
    std::process::exit(siegel_lab::run_from(std::env::args_os()));
}
