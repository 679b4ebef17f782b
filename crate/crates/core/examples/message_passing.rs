//! One layer of each architecture on a random batch of two graphs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use graphnorm::autodiff::Tape;
use graphnorm::graph::{sbm_generate, GraphBatch, SbmConfig};
use graphnorm::layers::{
    gat_layer, gatedgcn_layer, gcn_layer, Activation, GatLayer, GatedLayer, GcnLayer,
    MessageContext, NormKind,
};
use graphnorm::norm::{NormMode, RunningStats};
use graphnorm::params::ParamStore;
use graphnorm::{Result, Tensor};

fn main() -> Result<()> {
    let graphs = sbm_generate(&SbmConfig {
        num_graphs: 2,
        nodes_min: 5,
        nodes_max: 7,
        ..SbmConfig::default()
    })?;
    let batch = GraphBatch::concat(&graphs.iter().collect::<Vec<_>>())?;
    let ctx = MessageContext::new(&batch, true)?;
    let d = batch.features.cols();
    let norm: NormKind = "gn".parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut store = ParamStore::new();
    let gcn = GcnLayer::init(&mut store, "gcn", d, norm, &mut rng);
    let gat = GatLayer::init(&mut store, "gat", d, 2, norm, &mut rng)?;
    let gated = GatedLayer::init(&mut store, "gated", d, norm, &mut rng);
    println!(
        "{} parameter tensors, {} scalars",
        store.len(),
        store.num_scalars()
    );

    let mut tape = Tape::new();
    let vars = store.bind(&mut tape)?;
    let bind = |id: &graphnorm::params::ParamId| vars[id.0];
    let (gcn, gat, gated) = (gcn.map(bind), gat.map(bind), gated.map(bind));
    let h = tape.constant(batch.features.clone())?;
    let e = tape.constant(
        batch
            .edge_features
            .clone()
            .expect("sbm graphs carry edge features"),
    )?;
    let mut running = RunningStats::new(d);
    let mut edge_running = RunningStats::new(d);
    let mode = NormMode::Training;

    let a = gcn_layer(
        &mut tape,
        h,
        &ctx,
        &gcn,
        Activation::Relu,
        true,
        mode,
        &mut running,
    )?;
    println!("gcn\n{}", tape.value(a));
    let b = gat_layer(
        &mut tape,
        h,
        &ctx,
        &gat,
        Activation::Relu,
        true,
        mode,
        &mut running,
    )?;
    println!("gat\n{}", tape.value(b));
    // lift the 1-wide edge features to the node width
    let lift = tape.constant(Tensor::ones(1, d))?;
    let e0 = tape.matmul(e, lift)?;
    let (c, e1) = gatedgcn_layer(
        &mut tape,
        h,
        e0,
        &ctx,
        &gated,
        mode,
        &mut running,
        &mut edge_running,
    )?;
    println!("gatedgcn nodes\n{}", tape.value(c));
    println!("gatedgcn edges: {} rows", tape.shape(e1).0);
    Ok(())
}
