fn main() {
    std::process::exit(fracwave_harness::cli::main_with(std::env::args_os()));
}
