fn main() {
    std::process::exit(tarjama_cli::run(std::env::args_os()));
}
