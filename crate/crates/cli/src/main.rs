fn main() {
    std::process::exit(ligbind_cli::run(std::env::args_os()));
}
