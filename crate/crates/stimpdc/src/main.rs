use stimpdc::cli;

fn main() {
    std::process::exit(cli::run());
}
