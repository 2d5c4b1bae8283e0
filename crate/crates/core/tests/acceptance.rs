//! One pass/fail line per acceptance criterion. Runs as its own binary so
//! the lines are printed on every run; exits non-zero if any criterion
//! fails.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmdiag::battery::{battery_model, submodule_model};
use mmdiag::bench;
use mmdiag::boolfn::{BoolFn, Formula, Manager};
use mmdiag::diagnosability::{analyze, first_disagreement, BooleanAnalysis, Column, DiagnosabilityMatrix, MacroTable, Renderer};
use mmdiag::dmcore::{self, Bipartite};
use mmdiag::mmdm;
use mmdiag::model::{extract_structure, flatten, parser::parse, Approach, FlatModel};
use mmdiag::oracle::{compare, diagnosability_bruteforce, random_model_pair, RandomModelSpec, DEFAULT_MODE_CAP};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || {
        format!("took {:.3} s, limit {limit} s", elapsed.as_secs_f64())
    })
}

fn build(mgr: &mut Manager, text: &str) -> BoolFn {
    text.parse::<Formula>().unwrap().build(mgr).unwrap()
}

fn same_on(mgr: &mut Manager, inv: BoolFn, a: BoolFn, b: BoolFn) -> bool {
    mgr.and(a, inv) == mgr.and(b, inv)
}

fn entry(m: &DiagnosabilityMatrix, fault: &str, col: &str) -> BoolFn {
    m.entry(fault, col).unwrap_or_else(|| panic!("no entry {fault} / {col}"))
}

fn table2() -> Outcome {
    let start = Instant::now();
    let fm = submodule_model(Approach::Signal).map_err(|e| e.to_string())?;
    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, &fm, 1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let inv = m.invariant;
    let bypass = build(&mut mgr, "!forward & !backward");
    let ff = mgr.ff();
    for f in &m.faults {
        ensure(same_on(&mut mgr, inv, entry(&m, f, "NF"), inv), || format!("{f} not detectable everywhere"))?;
        ensure(mgr.is_false(entry(&m, f, f)), || format!("diagonal of {f}"))?;
    }
    for (a, b, want) in [
        ("f_cell", "f_v_cell", ff),
        ("f_v_cell", "f_cell", ff),
        ("f_cell", "f_i_cell", bypass),
        ("f_v_cell", "f_i_cell", bypass),
        ("f_i_cell", "f_cell", bypass),
        ("f_i_cell", "f_v_cell", bypass),
    ] {
        let got = entry(&m, a, b);
        ensure(same_on(&mut mgr, inv, got, want), || format!("entry {a} / {b}"))?;
    }
    let order = ["f_cell", "f_v_cell", "f_i_cell"].map(String::from);
    let m = m.reordered(&order).map_err(|e| e.to_string())?;
    let r = Renderer::new(&mut mgr, &MacroTable::battery())?;
    let text = r.table(&mut mgr, &m);
    ensure(text == include_str!("golden/table2.txt"), || format!("grid differs from golden file:\n{text}"))?;
    within(elapsed, 1.0)?;
    Ok(format!("all entries equal, grid byte-identical to golden file, {:.3} s", elapsed.as_secs_f64()))
}

fn boolean_submodule() -> Outcome {
    let start = Instant::now();
    let fm = submodule_model(Approach::Boolean).map_err(|e| e.to_string())?;
    let mut mgr = fm.new_manager();
    let g = extract_structure(&fm, &mut mgr).map_err(|e| e.to_string())?;
    let a = BooleanAnalysis::new(&mut mgr, &fm, &g).map_err(|e| e.to_string())?;
    let cell = a.fault_index("F_cell").map_err(|e| e.to_string())?;
    let current = a.fault_index("F_i_cell").map_err(|e| e.to_string())?;
    let voltage = a.fault_index("F_v_cell").map_err(|e| e.to_string())?;

    let three_clause = build(
        &mut mgr,
        "(!backward & !F_cell & !F_i_cell & !F_v_cell) | (!forward & !F_cell & !F_i_cell & !F_v_cell) \
         | (!forward & !backward & !F_cell & !F_v_cell)",
    );
    let valid = g.invariant;
    let over_cell = a.overdetermined(cell);
    let over_current = a.overdetermined(current);
    // the displayed formula is the overdetermined part of the F_cell
    // equation: its third clause admits F_i_cell, which disables the
    // F_i_cell equation itself
    ensure(same_on(&mut mgr, valid, over_cell, three_clause), || {
        "overdetermined part of e_F_cell differs from the three-clause formula".to_string()
    })?;
    let literal = same_on(&mut mgr, valid, over_current, three_clause);

    let vars: Vec<_> = fm.fault_vars.iter().map(|v| (mgr.var(v).unwrap(), false)).collect();
    let healthy = mgr.restrict(over_current, &vars).map_err(|e| e.to_string())?;
    let expected = build(&mut mgr, "!backward | !forward");
    ensure(healthy == expected, || "e_F_i_cell with all faults absent is not ¬backward ∨ ¬forward".to_string())?;

    let double = a.isolability(&mut mgr, cell, &[current, voltage]).map_err(|e| e.to_string())?;
    ensure(mgr.is_false(double), || "F_cell isolable from {F_i_cell, F_v_cell}".to_string())?;
    let elapsed = start.elapsed();
    within(elapsed, 1.0)?;
    Ok(format!(
        "three-clause formula = e+ of e_F_cell (on e_F_i_cell: {}), faults absent = ¬backward ∨ ¬forward, double fault 𝐅, {:.3} s",
        if literal { "also equal" } else { "differs where F_i_cell removes its own equation" },
        elapsed.as_secs_f64()
    ))
}

fn expected_pack_entry(mgr: &mut Manager, n: usize, inv: BoolFn, row: &str, col: &str) -> BoolFn {
    let bypass = |mgr: &mut Manager, k: usize| build(mgr, &format!("!c[{k}].forward & !c[{k}].backward"));
    if row == col {
        return mgr.ff();
    }
    if row == "f_i_pack" {
        let all: Vec<BoolFn> = (1..=n).map(|k| bypass(mgr, k)).collect();
        let all = mgr.and_all(all);
        return mgr.diff(inv, all);
    }
    for k in 1..=n {
        let (cell, volt) = (format!("c[{k}].f_cell"), format!("c[{k}].f_v_cell"));
        if (row == cell && col == volt) || (row == volt && col == cell) {
            let b = bypass(mgr, k);
            return mgr.diff(inv, b);
        }
    }
    inv
}

fn table3() -> Outcome {
    let mut notes = Vec::new();
    for n in 2..=4 {
        let start = Instant::now();
        let fm = battery_model(n, Approach::Signal).map_err(|e| e.to_string())?;
        let mut mgr = fm.new_manager();
        let (m, _) = analyze(&mut mgr, &fm, 1).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let inv = m.invariant;
        for (i, row) in m.faults.iter().enumerate() {
            for col in m.columns() {
                let name = match col {
                    Column::NoFault => "NF",
                    Column::Fault(j) => m.faults[j].as_str(),
                };
                let want = expected_pack_entry(&mut mgr, n, inv, row, name);
                let got = m.get(i, col);
                ensure(same_on(&mut mgr, inv, got, want), || format!("n={n}: entry {row} / {name}"))?;
            }
        }
        if n == 4 {
            within(elapsed, 30.0)?;
        }
        notes.push(format!("n={n} {:.3} s", elapsed.as_secs_f64()));
    }
    Ok(format!("every entry matches the pattern ({})", notes.join(", ")))
}

fn approach_agreement() -> Outcome {
    let start = Instant::now();
    for n in 1..=3 {
        let signal = battery_model(n, Approach::Signal).map_err(|e| e.to_string())?;
        let boolean = battery_model(n, Approach::Boolean).map_err(|e| e.to_string())?;
        let mut mgr = boolean.new_manager();
        let (a, _) = analyze(&mut mgr, &signal, 1).map_err(|e| e.to_string())?;
        let (b, _) = analyze(&mut mgr, &boolean, 1).map_err(|e| e.to_string())?;
        if let Some(d) = first_disagreement(&mut mgr, &a, &b) {
            return Err(format!("n={n}: {d}"));
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, 60.0)?;
    Ok(format!("n=1..3 entrywise equal, {:.3} s", elapsed.as_secs_f64()))
}

fn oracle_mismatches(fm: &FlatModel) -> Result<(usize, usize), String> {
    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, fm, 1).map_err(|e| e.to_string())?;
    let brute = diagnosability_bruteforce(fm, DEFAULT_MODE_CAP).map_err(|e| e.to_string())?;
    let found = compare(&mgr, &m, &brute).map_err(|e| e.to_string())?;
    if let Some(first) = found.first() {
        eprintln!("  {}", first.json_line());
    }
    Ok((found.len(), brute.modes.len()))
}

fn oracle() -> Outcome {
    let mut total = 0;
    for (n, modes) in [(1, 3), (2, 9)] {
        for approach in [Approach::Signal, Approach::Boolean] {
            let fm = battery_model(n, approach).map_err(|e| e.to_string())?;
            let (bad, got) = oracle_mismatches(&fm)?;
            ensure(got == modes, || format!("n={n} has {got} valid modes, expected {modes}"))?;
            total += bad;
        }
    }
    let spec = RandomModelSpec::default();
    let mut checked = 0;
    for seed in 0..100 {
        let (s, b) = random_model_pair(seed, &spec);
        for text in [s, b] {
            let fm = flatten(&parse(&text).map_err(|e| e.to_string())?, &Default::default()).map_err(|e| e.to_string())?;
            ensure(fm.equations.len() <= 6 && fm.system_mode_vars.len() <= 3, || format!("seed {seed} too large"))?;
            total += oracle_mismatches(&fm)?.0;
            checked += 1;
        }
    }
    ensure(total == 0, || format!("{total} mismatches"))?;
    Ok(format!("battery n=1,2 both approaches and {checked} random models: 0 mismatches"))
}

fn shuffles() -> Outcome {
    let fm = battery_model(2, Approach::Signal).map_err(|e| e.to_string())?;
    let mut mgr = fm.new_manager();
    let g = extract_structure(&fm, &mut mgr).map_err(|e| e.to_string())?;
    let base = mmdm::decompose(&mut mgr, &g).eq_over;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for round in 0..20 {
        let mut order: Vec<usize> = (0..g.edges.len()).collect();
        order.shuffle(&mut rng);
        let shuffled = g.with_edge_order(&mut mgr, &order);
        let over = mmdm::decompose(&mut mgr, &shuffled).eq_over;
        if let Some(e) = (0..base.len()).find(|&e| over[e] != base[e]) {
            return Err(format!("shuffle {round}: {} differs", g.equations[e]));
        }
    }
    Ok(format!("20 shuffles of {} edges, all {} functions equal", g.edges.len(), base.len()))
}

fn redundancy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut over_seen = 0;
    for round in 0..500 {
        let ne = rng.gen_range(1..=8);
        let nx = rng.gen_range(1..=8);
        let p = rng.gen_range(0.1..0.6);
        let edges: Vec<(usize, usize)> = (0..ne)
            .flat_map(|e| (0..nx).map(move |x| (e, x)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let g = Bipartite::new(ne, nx, edges);
        let d = dmcore::decompose(&g);
        let full = dmcore::max_matching(&g).size();
        for e in 0..ne {
            let redundant = dmcore::max_matching(&g.without_equation(e)).size() == full;
            ensure(redundant == d.is_overdetermined(e), || format!("graph {round}, equation {e}"))?;
            over_seen += usize::from(redundant);
        }
    }
    Ok(format!("500 graphs, E+ equals the redundant equations ({over_seen} overdetermined)"))
}

fn counts() -> Outcome {
    for n in 0..=6 {
        let s = battery_model(n, Approach::Signal).map_err(|e| e.to_string())?;
        let b = battery_model(n, Approach::Boolean).map_err(|e| e.to_string())?;
        ensure(s.boolean_variable_count() == 2 * n, || format!("n={n}: signal has {}", s.boolean_variable_count()))?;
        ensure(b.boolean_variable_count() == 5 * n + 2, || {
            format!("n={n}: boolean has {}", b.boolean_variable_count())
        })?;
        ensure(s.faults.len() == 3 * n + 2 && b.faults.len() == 3 * n + 2, || format!("n={n}: fault count"))?;
    }
    Ok("n=0..6: 2n, 5n+2 Boolean variables and 3n+2 faults".to_string())
}

fn performance() -> Outcome {
    let mut notes = Vec::new();
    for approach in [Approach::Signal, Approach::Boolean] {
        let start = Instant::now();
        let fm = battery_model(6, approach).map_err(|e| e.to_string())?;
        let mut mgr = fm.new_manager();
        analyze(&mut mgr, &fm, 1).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        within(elapsed, 120.0)?;
        notes.push(format!("{approach} {:.3} s", elapsed.as_secs_f64()));
    }
    let rows = bench::sweep(&[1, 2, 3, 4, 5, 6], 1).map_err(|e| e.to_string())?;
    let csv = bench::to_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    ensure(lines[0] == bench::CSV_HEADER, || "header".to_string())?;
    ensure(lines.len() == 13, || format!("{} lines", lines.len()))?;
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        ensure(f.len() == 6, || format!("row `{line}`"))?;
        let n: usize = f[0].parse().map_err(|_| format!("row `{line}`"))?;
        let vars: usize = f[3].parse().map_err(|_| format!("row `{line}`"))?;
        let want = if f[1] == "signal" { 2 * n } else { 5 * n + 2 };
        ensure(vars == want && f[2].parse::<f64>().is_ok() && f[5].parse::<usize>().is_ok(), || {
            format!("row `{line}`")
        })?;
    }
    Ok(format!("n=6: {}; bench CSV for n=1..6 well-formed", notes.join(", ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("one-submodule matrix, fault signals", table2),
        ("one-submodule Boolean faults", boolean_submodule),
        ("pack pattern n=2,3,4", table3),
        ("approach agreement n=1..3", approach_agreement),
        ("oracle equivalence", oracle),
        ("matching independence", shuffles),
        ("decomposition oracle", redundancy),
        ("variable and fault counts", counts),
        ("performance budget", performance),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
