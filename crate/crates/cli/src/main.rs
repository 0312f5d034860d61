fn main() {
    std::process::exit(dptree_cli::run(std::env::args_os()));
}
