fn main() {
    std::process::exit(lmem_cli::run_cli(std::env::args_os()));
}
