fn main() {
    std::process::exit(brw_lab::cli::run(std::env::args_os()));
}
