//! The four normalization scopes on a three-node path graph, then a
//! unified layer that mixes them.

use std::collections::BTreeMap;

use graphnorm::autodiff::Tape;
use graphnorm::graph::{Graph, GraphBatch, Labels};
use graphnorm::norm::{
    constrain_lambda, normalize, unified_gn_forward, ActiveSet, GnParams, NormMode, RunningStats,
    Scope, ScopeContext,
};
use graphnorm::{Result, Tensor};

fn main() -> Result<()> {
    let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 3.0], vec![2.0, 2.0]])?;
    let g = Graph::new(3, vec![(0, 1), (1, 2)], x, None, Labels::default())?;
    let batch = GraphBatch::concat(&[&g])?;
    let ctx = ScopeContext::for_nodes(&batch, true);
    let mut running = RunningStats::new(2);

    let mut tape = Tape::new();
    let h = tape.constant(batch.features.clone())?;
    for scope in Scope::ALL {
        let out = normalize(&mut tape, h, scope, &ctx, NormMode::Training, &mut running)?;
        println!("{:?}\n{}", scope, tape.value(out.output));
    }
    println!(
        "running mean after one batch {:?}",
        running.running_mean.data()
    );

    // graph and batch scope only; the other weights stay at exactly zero
    let params = GnParams::new(2, ActiveSet::parse("g,b")?);
    let lambda = constrain_lambda(&params)?;
    let weights: BTreeMap<char, f64> = Scope::ALL
        .iter()
        .map(|s| (s.letter(), lambda[s.index()].data()[0]))
        .collect();
    println!("lambda {weights:?}");
    let vars = params.bind(&mut tape)?;
    let y = unified_gn_forward(&mut tape, h, &ctx, &vars, NormMode::Inference, &mut running)?;
    println!("unified (inference)\n{}", tape.value(y));
    Ok(())
}
