fn main() {
    std::process::exit(attractorlab_cli::main_with(std::env::args_os()));
}
