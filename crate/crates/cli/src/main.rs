//! `condrec`: pipeline entry points for the precedent-backed condition
//! recommendation engine.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant
//! violation. Failures print a one-line JSON object to stderr.

mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "condrec", version, about = "Precedent-backed reaction condition recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for retrieval, evaluation, and resampling.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct RetrievalArgs {
    /// Retrieval key form: rxn or rxn+delta.
    #[arg(long)]
    key: Option<String>,
    /// Neighbors to retrieve.
    #[arg(long)]
    k: Option<usize>,
    /// Neighbor weighting: 'uniform' or a positive softmax temperature.
    #[arg(long)]
    temp: Option<String>,
    /// Head weight in the hybrid fusion (0 = pure retrieval).
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a reaction TSV and emit dataset artifacts.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Also fingerprint every reaction into a bit-packed bank.
        #[arg(long)]
        emit_fingerprints: bool,
        /// Fingerprint width (power of two).
        #[arg(long)]
        nbits: Option<usize>,
    },
    /// Build the train-only precedent index from an embedding bank.
    BuildIndex {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Directory holding catalyst.txt / solvent.txt / reagent.txt.
        #[arg(long)]
        vocabs: Option<PathBuf>,
        #[arg(long)]
        key: Option<String>,
    },
    /// Produce recommendation JSON for chosen reaction ids.
    Recommend {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        vocabs: Option<PathBuf>,
        /// Role-tagged head probability files, comma separated.
        #[arg(long, value_delimiter = ',')]
        heads: Option<Vec<PathBuf>>,
        /// Comma-separated reaction ids; defaults to every test-split row of
        /// --dataset.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<String>>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the evaluation protocol on the test split.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        vocabs: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        heads: Option<Vec<PathBuf>>,
        /// Bootstrap seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Bootstrap resample count.
        #[arg(long)]
        resamples: Option<usize>,
        /// Also score the prior, template-majority, and fingerprint k-NN
        /// baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// Grid-select retrieval settings on a train-derived validation split.
    Select {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        vocabs: Option<PathBuf>,
        /// Candidate neighbor counts, e.g. 1,5,10,31.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Candidate temperatures, e.g. uniform,0.07.
        #[arg(long, value_delimiter = ',')]
        temps: Option<Vec<String>>,
        /// Candidate key forms, e.g. rxn,rxn+delta.
        #[arg(long, value_delimiter = ',')]
        keys: Option<Vec<String>>,
        /// Validation fraction of the train split.
        #[arg(long)]
        fraction: Option<f64>,
        /// Target metric: acc@K or role:acc@K (e.g. solvent:acc@1).
        #[arg(long)]
        metric: Option<String>,
        /// After selection, rebuild on the full train split and evaluate the
        /// winner once on the held-out test split.
        #[arg(long)]
        final_eval: bool,
    },
    /// Absent-class and overlap-exclusion audits.
    Audit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        /// Which audit to run: absent, overlap, or both.
        #[arg(long, default_value = "both")]
        kind: String,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        vocabs: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        heads: Option<Vec<PathBuf>>,
        /// Role whose labels define overlap relevance.
        #[arg(long)]
        role: Option<String>,
        /// Exclusion rung name, or 'all' for the whole ladder.
        #[arg(long)]
        exclusion: Option<String>,
    },
    /// Generate a deterministic synthetic corpus.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Corpus family: complementary, selection, or prior.
        #[arg(long, default_value = "complementary")]
        corpus: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({ "code": err.code, "message": err.message })
            );
            ExitCode::from(err.code)
        }
    }
}
