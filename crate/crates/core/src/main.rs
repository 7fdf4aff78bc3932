fn main() {
    std::process::exit(htax::cli::run(std::env::args_os()));
}
