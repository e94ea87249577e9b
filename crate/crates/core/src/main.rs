fn main() {
    std::process::exit(protoselect::cli::run(std::env::args_os()));
}
