fn main() {
    std::process::exit(gqr_gateway::cli::run());
}
