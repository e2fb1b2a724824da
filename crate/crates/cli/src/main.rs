fn main() {
    std::process::exit(kinklab_cli::parse_and_dispatch(std::env::args_os().skip(1)));
}
