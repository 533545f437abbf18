fn main() {
    std::process::exit(rewritekit_cli::run(std::env::args_os()));
}
