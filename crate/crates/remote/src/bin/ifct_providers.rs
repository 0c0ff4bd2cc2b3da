//! Standalone provider service for the remote interfaces.

use clap::Parser;

use ifct_remote::server::{serve, ServerConfig};

#[derive(Parser)]
#[command(name = "ifct-providers", about = "Serve the embedding, parser, and planner endpoints")]
struct Args {
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1:8391")]
    bind: String,
    /// Seed of the deterministic embedding provider.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(&args.bind).await?;
    println!("listening on {}", listener.local_addr()?);
    serve(
        listener,
        ServerConfig {
            seed: args.seed,
            dim: args.dim,
        },
    )
    .await
}
