use clap::Parser;

fn main() -> anyhow::Result<()> {
    res_scan::cli::run(res_scan::cli::Cli::parse())
}
