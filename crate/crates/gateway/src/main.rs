fn main() {
    std::process::exit(storybolt_gateway::cli::main_with_args(std::env::args_os()));
}
