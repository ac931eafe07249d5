//! Smallest useful run: relax the minimal two-spin chain under its
//! random-phase effective Hamiltonian and print the lasing transition.

use phonlase::lindblad::{effective_generator, integrate, DissipatorSet, IntegrationSpec};
use phonlase::model::{effective_hamiltonian_case1, initial_state, ChainLayout};
use phonlase::presets::fig2_chain;

fn main() -> phonlase::Result<()> {
    let config = fig2_chain(40);
    let chain = ChainLayout::new(&config)?;
    let h_eff = effective_hamiltonian_case1(&config, &chain)?;
    let diss = DissipatorSet::from_config(&config, &chain)?;
    let generator = effective_generator(h_eff, &diss);
    let spec = IntegrationSpec::for_generator(4000.0, &generator, &diss, 20);

    let b = chain.b(0)?;
    let bdag = b.dagger();
    let probes = vec![
        ("n".to_string(), bdag.dot(&b)?),
        ("n2".to_string(), bdag.dot(&bdag)?.dot(&b)?.dot(&b)?),
    ];
    let rho0 = initial_state(&config, &chain)?;
    let out = integrate(&rho0, &generator, &diss, &spec, &probes)?;

    println!("{:>8}  {:>8}  {:>6}", "t", "n", "g2");
    let n = out.record.get("n")?;
    let n2 = out.record.get("n2")?;
    for (i, t) in out.record.times.iter().enumerate() {
        let g2 = n2[i].re / (n[i].re * n[i].re);
        println!("{t:8.1}  {:8.4}  {g2:6.3}", n[i].re);
    }
    Ok(())
}
