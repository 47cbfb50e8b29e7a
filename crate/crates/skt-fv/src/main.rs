fn main() {
    std::process::exit(skt_fv::cli::run());
}
