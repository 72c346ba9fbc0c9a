use biotmix::assemble::assemble_biot_step;
use biotmix::driver::build_spaces;
use biotmix::linsolve::{min_degree_ordering, LdlFactor};
use biotmix::mesh::build_unit_square;
use biotmix::pairing::lookup;
use biotmix::problem::Params;
use biotmix::space::apply_essential_bcs;
use std::time::Instant;

fn peak_rss_mb() -> f64 {
    let s = std::fs::read_to_string("/proc/self/status").unwrap_or_default();
    for line in s.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches(" kB").trim().parse().unwrap_or(0.0);
            return kb / 1024.0;
        }
    }
    0.0
}

fn main() {
    for name in ["p2-rt0-dg0", "p2-p1-dg0"] {
        let pairing = lookup(name).unwrap();
        for n in [16usize, 32, 64] {
            let mesh = build_unit_square(n).unwrap();
            let spaces = build_spaces(pairing, &mesh).unwrap();
            let params = Params { c0: 0.0, ..Params::default() };
            let system =
                assemble_biot_step(&mesh, &spaces.u, &spaces.w, &spaces.q, &params, true).unwrap();
            let bc: Vec<(usize, f64)> = system.constrained.iter().map(|&i| (i, 0.0)).collect();
            let mut scratch = vec![0.0; system.matrix.nrows];
            let reduced = apply_essential_bcs(&system.matrix, &mut scratch, &bc).unwrap();
            let t0 = Instant::now();
            let order = min_degree_ordering(&reduced);
            let t_ord = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let f = LdlFactor::new(&reduced, &order).unwrap();
            let t_fac = t1.elapsed().as_secs_f64();
            println!(
                "{name} n={n}: dofs {} nnz(L) {} order {:.2}s factor {:.2}s peak_rss {:.0}MB",
                reduced.nrows,
                f.nnz_factor(),
                t_ord,
                t_fac,
                peak_rss_mb()
            );
        }
    }
}
