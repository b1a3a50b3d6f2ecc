fn main() {
    std::process::exit(twoatom_cqed::cli::run(std::env::args_os()));
}
