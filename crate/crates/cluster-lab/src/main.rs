use std::process::exit;

fn main() {
    exit(cluster_lab::cli::run(std::env::args_os()));
}
