fn main() {
    std::process::exit(votelab::cli::run(std::env::args_os()));
}
