//! The acceptance criteria, one PASS or FAIL line each.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use bitype_core::consistency::replicated_set;
use bitype_core::{
    apply, branches, check_const, check_const_diag, check_file_bounded, check_replicated,
    check_term, evaluate, expand_env, is_message, parse, run, subtype, type_file, Action, Atom,
    Bounds, Constraint, ConstraintEntry, ConstraintSet, Constraints, Label, Mult, NonceType,
    OracleVerdict, RunOptions, Subst, Term, Type, TypeEnv, Typed,
};
use common::expansion::{branches_ref, env_of, environment, expand_env_ref, flat, Flat};
use common::messages::{env as message_env, message_pair, same_head};
use common::subtyping::{inversions, small_types, step_up, supertypes};
use common::{constant, key, message, nonce, open_term, security_type, var};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome);

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(corpus().join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        max_global_rejects: 100_000,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Drops session indices and freshening counters.
fn plain(t: &Term) -> Term {
    t.map_atoms(&mut |a| a.base().with_fresh(0).into())
}

fn helios() -> Outcome {
    let src = read("helios.tq");
    let start = Instant::now();
    let report = run(&src, RunOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        report.verdict.is_proven(),
        format!("verdict {}", report.verdict),
    )?;
    ensure(elapsed < 5.0, format!("took {elapsed:.3} s"))?;

    let status = Command::new(env!("CARGO_BIN_EXE_bitype"))
        .arg("run")
        .arg(corpus().join("helios.tq"))
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure(
        status.code() == Some(0),
        format!("`bitype run` exited with {status}"),
    )?;

    let file = parse(&src).map_err(|e| e.to_string())?;
    let set = match type_file(&file, RunOptions::default()).map_err(|e| e.to_string())? {
        Typed::Replicated(c, c_seq) => replicated_set(&c, &c_seq),
        Typed::Plain(c) => c,
    };
    let (ks, ka, kb) = (Term::pk(key("ks")), key("ka"), key("kb"));
    let ballot = |v: &str, x: &str, r: &str| {
        Term::aenc(Term::tuple(vec![constant(v), var(x), nonce(r)]), ks.clone())
    };
    let expected = [
        Constraint::new(ballot("0", "x", "ra"), ballot("1", "x", "ra")),
        Constraint::new(ballot("1", "y", "rb"), ballot("0", "y", "rb")),
        Constraint::new(
            Term::sign(ballot("0", "x", "ra"), ka.clone()),
            Term::sign(ballot("1", "x", "ra"), ka),
        ),
        Constraint::new(
            Term::sign(ballot("1", "y", "rb"), kb.clone()),
            Term::sign(ballot("0", "y", "rb"), kb),
        ),
    ];
    let found = set.entries().iter().any(|e| {
        let cs: BTreeSet<Constraint> = e
            .constraints
            .iter()
            .map(|c| Constraint::new(plain(&c.left), plain(&c.right)))
            .collect();
        let public = |x: &str| {
            e.env
                .iter()
                .any(|(a, t)| a.is_var() && a.name() == x && *t == Type::LL)
        };
        expected.iter().all(|c| cs.contains(c)) && public("x") && public("y")
    });
    ensure(
        found,
        "no entry holds the four ballot constraints with x:LL and y:LL",
    )?;
    Ok(format!(
        "proven in {:.1} ms, four ballot constraints present with x:LL, y:LL",
        elapsed * 1000.0
    ))
}

fn worked_examples() -> Outcome {
    let ra = Atom::nonce("ra");
    let rb = Atom::nonce("rb");
    let ks = Atom::key("ks");
    let env = TypeEnv::from_pairs([
        (
            ra.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::One, ra.clone())),
        ),
        (
            rb.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::One, rb.clone())),
        ),
        (ks.clone(), Type::key(Label::HH, Type::HL)),
    ]);
    let pk = Term::pk(ks.clone().into());
    let single = |c: Vec<(Term, Term)>, env: &TypeEnv| {
        ConstraintSet::single(ConstraintEntry::new(
            c.into_iter().map(|(l, r)| Constraint::new(l, r)).collect(),
            env.clone(),
        ))
    };
    let enc = |m: Term| Term::aenc(m, pk.clone());
    let c = single(
        vec![
            (
                enc(Term::pair(constant("0"), ra.clone().into())),
                enc(Term::pair(constant("1"), ra.clone().into())),
            ),
            (
                enc(Term::pair(constant("1"), rb.clone().into())),
                enc(Term::pair(constant("0"), rb.clone().into())),
            ),
        ],
        &env,
    );
    let c_prime = single(
        vec![
            (enc(constant("0")), enc(constant("1"))),
            (enc(constant("1")), enc(constant("0"))),
        ],
        &env,
    );
    ensure(check_const(&c), "check_const(c) is false")?;
    ensure(!check_const(&c_prime), "check_const(c') is true")?;

    let n1 = Atom::nonce("n1");
    let n2 = Atom::nonce("n2");
    let henv = TypeEnv::from_pairs([
        (
            n1.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::One, n1.clone())),
        ),
        (
            n2.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::One, n2.clone())),
        ),
    ]);
    let h1 = Term::h(n1.clone().into());
    let hashes = single(
        vec![(h1.clone(), Term::h(n2.clone().into())), (h1.clone(), h1)],
        &henv,
    );
    let diag = match check_const_diag(&hashes) {
        Ok(()) => return Err("the hash set is reported consistent".into()),
        Err(e) => e,
    };
    ensure(
        diag.step == 4 && diag.to_string().contains("step 4"),
        format!("diagnostic names the wrong step: {diag}"),
    )?;

    let m = Atom::nonce("m");
    let p = Atom::nonce("p");
    let renv = TypeEnv::from_pairs([
        (
            m.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::Inf, m.clone())),
        ),
        (
            p.clone(),
            Type::nonce(NonceType::new(Label::HH, Mult::One, p.clone())),
        ),
    ]);
    let repl = single(vec![(Term::h(m.into()), Term::h(p.into()))], &renv);
    let unit = ConstraintSet::single(ConstraintEntry::new(Constraints::new(), TypeEnv::new()));
    ensure(
        check_const(&repl),
        "the replication counterexample fails check_const",
    )?;
    ensure(
        !check_replicated(&repl, &unit),
        "the replication counterexample passes check_replicated",
    )?;
    Ok("c true, c' false, hash set false at step 4, replication counterexample caught".into())
}

fn protocol_of(path: &Path) -> (String, Option<u32>) {
    let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
    match stem
        .rsplit_once('-')
        .and_then(|(p, n)| n.parse().ok().map(|n| (p.to_string(), n)))
    {
        Some((p, n)) => (p, Some(n)),
        None => (stem, None),
    }
}

fn corpus_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "tq"))
        .collect();
    files.sort_by_key(|p| protocol_of(p));
    files
}

fn bounded_benchmark() -> Outcome {
    let symmetric = [
        "denning-sacco",
        "wide-mouth-frog",
        "needham-schroeder",
        "yahalom-lowe",
        "otway-rees",
    ];
    let mut checked = 0;
    let mut slowest = (0.0f64, String::new());
    for path in corpus_files() {
        let (protocol, sessions) = protocol_of(&path);
        let wanted = match sessions {
            Some(n) if symmetric.contains(&protocol.as_str()) => (3..=14).contains(&n),
            Some(n) if protocol == "needham-schroeder-lowe" => (2..=8).contains(&n),
            _ => false,
        };
        if !wanted {
            continue;
        }
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let start = Instant::now();
        let report = run(&read(&name), RunOptions::default()).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        ensure(
            report.verdict.is_proven(),
            format!("{name}: {}", report.verdict),
        )?;
        ensure(secs < 1.0, format!("{name}: {secs:.3} s"))?;
        if secs > slowest.0 {
            slowest = (secs, name);
        }
        checked += 1;
    }
    ensure(
        checked == 33,
        format!("expected 33 bounded files, found {checked}"),
    )?;
    Ok(format!(
        "{checked} files proven, slowest {} at {:.1} ms",
        slowest.1,
        slowest.0 * 1000.0
    ))
}

fn soundness_cross_check() -> Outcome {
    let bounds = Bounds {
        trace_depth: 6,
        recipe_depth: 3,
        repl_bound: 2,
        ..Bounds::default()
    };
    let mut checked = 0;
    let mut slowest = (0.0f64, String::new());
    for path in corpus_files() {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let src = read(&name);
        if !run(&src, RunOptions::default())
            .map_err(|e| e.to_string())?
            .verdict
            .is_proven()
        {
            continue;
        }
        let file = parse(&src).map_err(|e| e.to_string())?;
        let report = check_file_bounded(&file, &bounds, false);
        if let OracleVerdict::Attack(a) = &report.verdict {
            return Err(format!("{name}: attack found\n{a}"));
        }
        let secs = report.elapsed_ms / 1000.0;
        ensure(secs < 600.0, format!("{name}: oracle took {secs:.1} s"))?;
        if secs > slowest.0 {
            slowest = (secs, name);
        }
        checked += 1;
    }
    let file = parse(&read("helios-no-weeding.tq")).map_err(|e| e.to_string())?;
    let report = check_file_bounded(&file, &bounds, false);
    let OracleVerdict::Attack(attack) = &report.verdict else {
        return Err("no attack found on helios-no-weeding.tq".into());
    };
    let copies_a_ballot = attack
        .actions
        .iter()
        .any(|a| matches!(a, Action::In(r) if r.atoms().iter().any(Atom::is_frame_var)));
    ensure(
        copies_a_ballot,
        format!("the attack never feeds an observed ballot back:\n{attack}"),
    )?;
    Ok(format!(
        "no attack on {checked} proven files (slowest {} at {:.1} s); ballot-copy attack on helios-no-weeding",
        slowest.1, slowest.0
    ))
}

fn subtyping_suite() -> Outcome {
    let types = small_types();
    for t in &types {
        let ups = supertypes(t);
        for u in &types {
            ensure(
                subtype(t, u) == ups.contains(u),
                format!("{t} <: {u} disagrees with the rule closure"),
            )?;
        }
    }
    let strategy = (
        security_type(4),
        security_type(4),
        security_type(4),
        prop::collection::vec(any::<u8>(), 0..64),
    );
    runner(10_000)
        .run(&strategy, |(t, u, w, picks)| {
            prop_assert!(t.depth() <= 4);
            prop_assert!(subtype(&t, &t), "reflexivity");
            prop_assert!(subtype(&t, &Type::HL), "top");
            let mut pick = picks.into_iter().cycle();
            let up = step_up(&t, &mut pick);
            let upper = step_up(&up, &mut pick);
            prop_assert!(
                subtype(&t, &up) && subtype(&up, &upper) && subtype(&t, &upper),
                "transitivity"
            );
            if subtype(&t, &u) && subtype(&u, &w) {
                prop_assert!(subtype(&t, &w), "transitivity");
            }
            for (a, b) in [(&t, &u), (&u, &t), (&t, &up), (&up, &upper), (&t, &upper)] {
                inversions(a, b)?;
            }
            for l in Label::ALL {
                inversions(&t, &Type::Label(l))?;
                inversions(&Type::Label(l), &t)?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} small types checked exhaustively; 10000 random types of depth <= 4",
        types.len()
    ))
}

fn evaluation_suite() -> Outcome {
    let subst = (message(3), message(3), message(3)).prop_map(|(x, y, z)| {
        Subst::from_pairs([
            (Atom::var("x"), x),
            (Atom::var("y"), y),
            (Atom::var("z"), z),
        ])
    });
    let term = open_term(4).prop_filter("depth at most 5", |t| t.depth() <= 5);
    let successes = Cell::new(0u32);
    runner(10_000)
        .run(&(term, subst), |(t, sigma)| {
            for (_, m) in sigma.iter() {
                prop_assert!(is_message(m) && m.depth() <= 5);
            }
            if let Ok(u) = evaluate(&t) {
                successes.set(successes.get() + 1);
                prop_assert_eq!(evaluate(&u), Ok(u.clone()), "idempotence");
                prop_assert_eq!(
                    evaluate(&apply(&sigma, &t)),
                    Ok(apply(&sigma, &u)),
                    "substitution"
                );
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "10000 pairs, {} with successful evaluation",
        successes.get()
    ))
}

fn same_head_suite() -> Outcome {
    let env = message_env();
    let successes = Cell::new(0u32);
    runner(12_000)
        .run(&message_pair(), |(m, n)| {
            if check_term(&env, &m, &n, &Type::LL).is_ok() {
                successes.set(successes.get() + 1);
                prop_assert!(same_head(&m, &n), "{} ~ {} typed at LL", m, n);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    ensure(
        successes.get() >= 1_000,
        format!("only {} pairs typed at LL", successes.get()),
    )?;
    Ok(format!(
        "{} pairs typed at LL, all with matching head and key",
        successes.get()
    ))
}

fn expansion_suite() -> Outcome {
    runner(500)
        .run(&(environment(), 1u32..=3, 1u32..=3), |(env, i, n)| {
            let expanded = expand_env_ref(&env, i, n);
            prop_assert_eq!(flat(&expand_env(&env, i, n)), expanded.clone());
            let whole = branches_ref(&expanded);
            let library: BTreeSet<Flat> = branches(&env_of(&expanded)).iter().map(flat).collect();
            prop_assert_eq!(&library, &whole);
            let per_branch: BTreeSet<Flat> = branches(&env)
                .iter()
                .flat_map(|b| branches(&expand_env(b, i, n)))
                .map(|e| flat(&e))
                .collect();
            prop_assert_eq!(&per_branch, &whole);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("500 environments, n <= 3".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("Helios reproduction", helios),
        ("check_const worked examples", worked_examples),
        ("bounded-case benchmark", bounded_benchmark),
        ("soundness cross-check", soundness_cross_check),
        ("subtyping properties", subtyping_suite),
        ("evaluation and substitution", evaluation_suite),
        ("same head symbol at LL", same_head_suite),
        ("branches and expansion", expansion_suite),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
