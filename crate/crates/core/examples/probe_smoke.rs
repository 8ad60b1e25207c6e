use ticket_core::families::{build_fourier_target, FamilyNet, FourierFamilySpec};
use ticket_core::init::InitFamily;
use ticket_core::net::Architecture;
use ticket_core::prune::PruneOptions;
use ticket_core::rng::substream;
use rand::Rng;

fn main() {
    let spec = FourierFamilySpec {
        d: 1,
        frequencies: vec![vec![1]],
        phases: vec![0.0],
        eps: 0.1,
        delta: 0.3,
        m: 1,
    };
    let target = build_fourier_target(&spec).unwrap().with_knot_count(21).unwrap();
    println!("sin_sheet eps={} delta={} n={}", target.sin_sheet.eps, target.sin_sheet.delta, target.sin_sheet.n);
    let archs = [Architecture::dense(vec![1, 250, 21, 250, 1])];
    for (cap, max_subset) in [(40, 5), (40, 6), (48, 6)] {
        let options = PruneOptions { ground_cap: cap, max_subset, ..PruneOptions::default() };
        let mut ok = 0;
        let mut fractions = Vec::new();
        let mut sups = Vec::new();
        let start = std::time::Instant::now();
        for index in 0..20u32 {
            let seed: u64 = substream(11, &[50, index as u64]).gen();
            let net = FamilyNet::sample(&archs, InitFamily::Uniform, seed).unwrap();
            let ticket = target.prune(&net, &options).unwrap();
            if ticket.success {
                ok += 1;
            }
            fractions.push(ticket.surviving_fraction);
            sups.push(ticket.pruning_error);
        }
        fractions.sort_by(f64::total_cmp);
        sups.sort_by(f64::total_cmp);
        println!(
            "cap={cap} k={max_subset}: success {ok}/20 fraction [{:.4},{:.4}] sup median {:.2e} ({:.1}s)",
            fractions[0],
            fractions[19],
            sups[10],
            start.elapsed().as_secs_f64()
        );
    }
}
