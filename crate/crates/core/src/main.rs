use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use boxsearch::bench::{run_bench, to_tsv, BenchParams};
use boxsearch::error::Error;
use boxsearch::index::{CatalogParams, IndexCatalog, DEFAULT_LEAF_SIZE};
use boxsearch::query::{EngineConfig, ModelKind};
use boxsearch::service::{self, ServiceConfig, DATA_ROOT_ENV, DEFAULT_PATCH_CAP, DEFAULT_PORT, PORT_ENV};
use boxsearch::store::{parse_feature_text, read_records, write_store, FeatureStore};
use boxsearch::synth::{self, GroundTruth, SynthParams, GROUND_TRUTH_FILE};

#[derive(Parser)]
#[command(name = "boxsearch", version, about = "Search-by-classification over patch feature catalogs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted classes
    Synth {
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n_patches: u64,
        #[arg(long, default_value_t = 384)]
        dims: u32,
        #[arg(long)]
        grid_cols: Option<u64>,
        #[arg(long, default_value_t = 8)]
        n_clusters: u32,
        #[arg(long, default_value_t = 4)]
        planted_classes: u32,
        /// Comma-separated class sizes as fractions of the corpus, cycled over classes
        #[arg(long, value_delimiter = ',', default_value = "0.001")]
        planted_fractions: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        gap: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Skip writing per-patch PNGs
        #[arg(long)]
        no_images: bool,
    },
    /// Build a store from a text feature matrix and an optional record table
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the index catalog over a store
    BuildIndex {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
        n_indexes: u32,
        #[arg(long, default_value_t = 6)]
        subset_size: u32,
        #[arg(long, default_value_t = DEFAULT_LEAF_SIZE)]
        leaf_size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time indexed against scan inference on planted-class queries
    Bench {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Defaults to ground_truth.json inside the store directory
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        queries: u32,
        #[arg(long, value_delimiter = ',', default_value = "0.001,1.0")]
        selectivities: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "dbranch,dbranch_ens,dtree,rforest,knn")]
        models: Vec<ModelKind>,
        #[arg(long, default_value_t = 5)]
        repetitions: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the HTTP service
    Serve {
        /// Store directory; defaults to the data root
        #[arg(long)]
        store: Option<PathBuf>,
        /// Catalog directory; defaults to `catalog` under the data root
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Directory that image references resolve against
        #[arg(long, env = DATA_ROOT_ENV)]
        data_root: Option<PathBuf>,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
        knn_k: u32,
        #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u32).range(1..))]
        ensemble_size: u32,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
        candidates: u32,
    },
}

struct Failure {
    code: &'static str,
    message: String,
    usage: bool,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.code(), message: e.to_string(), usage: false }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: "usage", message, usage: true }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            n_patches,
            dims,
            grid_cols,
            n_clusters,
            planted_classes,
            planted_fractions,
            gap,
            seed,
            out,
            no_images,
        } => {
            let params = SynthParams {
                n_patches,
                n_dims: dims,
                grid_cols,
                n_clusters,
                n_planted_classes: planted_classes,
                planted_fractions,
                gap,
                seed,
                ..SynthParams::default()
            };
            let dataset = synth::generate(&params)?;
            let manifest = synth::write_dataset(&dataset, &out, !no_images)?;
            println!("wrote {} patches x {} dims to {} (fingerprint {})", manifest.n_rows, manifest.n_dims, out.display(), manifest.fingerprint);
            for c in &dataset.ground_truth.classes {
                println!("class {}\t{:?}\t{} patches\towned dims {:?}", c.class, c.motif, c.ids.len(), c.owned_dims);
            }
        }
        Command::Ingest { features, records, out } => {
            let text = std::fs::read_to_string(&features).map_err(Error::from)?;
            let matrix = parse_feature_text(&text)?;
            let records = match records {
                Some(path) => read_records(path)?,
                None => {
                    let n = matrix.n_rows() as u64;
                    synth::grid_records(n, synth::grid_cols_for(n))
                }
            };
            let manifest = write_store(&matrix, &records, &out)?;
            println!("wrote {} rows x {} dims to {} (fingerprint {})", manifest.n_rows, manifest.n_dims, out.display(), manifest.fingerprint);
        }
        Command::BuildIndex { store, n_indexes, subset_size, leaf_size, seed, out } => {
            let store = Arc::new(FeatureStore::open(&store)?);
            let t = Instant::now();
            let catalog = IndexCatalog::build(&store, CatalogParams { n_indexes, subset_size, seed, leaf_size })?;
            catalog.save(&out)?;
            for (i, (e, time)) in catalog.entries().iter().zip(catalog.build_times()).enumerate() {
                println!(
                    "index {i:03}\tdims {}\t{} nodes\t{} leaves\t{:.1} ms",
                    e.subset,
                    e.index.node_count(),
                    e.index.leaf_count(),
                    time.as_secs_f64() * 1e3
                );
            }
            println!("built {} indexes in {:.1} ms into {}", catalog.len(), t.elapsed().as_secs_f64() * 1e3, out.display());
        }
        Command::Bench { store, catalog, ground_truth, queries, selectivities, models, repetitions, seed } => {
            let gt_path = ground_truth.unwrap_or_else(|| store.join(GROUND_TRUTH_FILE));
            if !gt_path.is_file() {
                return Err(usage(format!("ground truth {} not found", gt_path.display())));
            }
            let truth = GroundTruth::load(&gt_path)?;
            let store = Arc::new(FeatureStore::open(&store)?);
            let catalog = IndexCatalog::load(&catalog, &store)?;
            let params = BenchParams { queries, selectivities, seed, repetitions, models, ..BenchParams::default() };
            let rows = run_bench(&store, &catalog, &truth, &params)?;
            print!("{}", to_tsv(&rows));
        }
        Command::Serve { store, catalog, data_root, port, host, knn_k, ensemble_size, candidates } => {
            let Some(store) = store.or_else(|| data_root.clone()) else {
                return Err(usage(format!("pass --store or --data-root (or set {DATA_ROOT_ENV})")));
            };
            let data_root = data_root.unwrap_or_else(|| store.clone());
            let catalog = catalog.unwrap_or_else(|| data_root.join("catalog"));
            let config = ServiceConfig {
                data_root,
                store,
                catalog,
                addr: SocketAddr::new(host, port),
                engine: EngineConfig { knn_k, ensemble_size, n_candidate_subsets: candidates, ..EngineConfig::default() },
                patch_cap: DEFAULT_PATCH_CAP,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(Error::from)?;
            runtime
                .block_on(service::serve(config))
                .map_err(|e| Failure { code: e.code, message: e.message, usage: false })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}
