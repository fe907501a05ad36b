//! Argument definitions and command bodies.

use crate::suites::{self, DEFAULT_SEED, SUITES};
use crate::{CliError, Output};
use brlogic::arithx::{check_mulext_hypothesis, pi_extend, recipe_seed, synthesize_multiplication};
use brlogic::evaluator::{ef::ef_equivalent, Assignment, EvalOptions, Evaluator};
use brlogic::model::{parse_model, powerset_structure, word_model, BrModel, BuiltinRegistry, PartialArithModel, Vocabulary, DEFAULT_POWERSET_CAP};
use brlogic::quantifiers::{builtin_quantifiers, QuantifierRegistry};
use brlogic::sets::{f_s_omega_s, loose_at, pseudoloose_at, LoosenessReport, NumericalSet, Rational, WordPolicy};
use brlogic::syntax::{parse, Formula, ParseContext};
use brlogic::transforms::{mso_translate, relativize_formula, substitute, Substitution};
use clap::{Parser, Subcommand};
use regex::Regex;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "brlogic", version, about = "Logics with built-in relations over permuted finite domains")]
pub struct Cli {
    /// Line-oriented file registering sets and quantifiers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on the estimated number of evaluation steps.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a formula and print it back.
    Parse {
        #[arg(long)]
        formula: String,
        /// Relation arities such as `U:1,E:2`; inferred when omitted.
        #[arg(long)]
        vocab: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate a formula on a model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        formula: String,
        /// `x=1,y=3,X={0,2}`.
        #[arg(long)]
        assign: Option<String>,
    },
    /// Decide r-round EF equivalence of two models.
    Ef {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        model2: PathBuf,
        #[arg(long)]
        rank: usize,
        /// Built-ins visible to the game, e.g. `le,plus`.
        #[arg(long, default_value = "")]
        builtins: String,
    },
    /// Syntactic transformations.
    Transform {
        #[command(subcommand)]
        which: Transform,
    },
    /// Periodicity values and looseness of a numerical set.
    AnalyzeSet {
        #[arg(long)]
        set: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: Option<String>,
    },
    /// Iterate mu from a recipe seed or from the relation M of a model file.
    Mulext {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Witness, nu, hypothesis check and pi for a numerical set.
    Pipeline {
        #[arg(long)]
        set: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        k: usize,
    },
    /// Run a named suite, or `all`.
    Check {
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print generated models in the model file format.
    Gen {
        #[command(subcommand)]
        what: Gen,
    },
}

#[derive(Debug, Subcommand)]
pub enum Transform {
    /// Replace relations by formulas: `--sub "U(y) := !V(y)"`.
    Subst {
        #[arg(long)]
        formula: String,
        #[arg(long)]
        vocab: Option<String>,
        #[arg(long = "sub", required = true)]
        subs: Vec<String>,
    },
    /// Relativize to the set defined by PSI in VAR.
    Rel {
        #[arg(long)]
        formula: String,
        #[arg(long)]
        vocab: Option<String>,
        #[arg(long)]
        var: String,
        #[arg(long)]
        psi: String,
    },
    /// Translate a sentence over E into MSO on words.
    Mso {
        #[arg(long)]
        formula: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum Gen {
    Word {
        word: String,
    },
    Powerset {
        #[arg(long)]
        k: usize,
    },
    /// The recipe seed for n and k as relations A and M.
    Arith {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
}

struct Env {
    builtins: BuiltinRegistry,
    quants: QuantifierRegistry,
    options: EvalOptions,
}

impl Env {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let mut builtins = BuiltinRegistry::default();
        let mut quants = builtin_quantifiers();
        if let Some(path) = &cli.config {
            quants.load_config(&read(path)?, &mut builtins)?;
        }
        let mut options = EvalOptions::default();
        if let Some(b) = cli.budget {
            options.budget = b as f64;
        }
        Ok(Env { builtins, quants, options })
    }

    fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(&self.builtins, &self.quants).with_options(self.options)
    }

    fn formula(&self, text: &str, vocab: &Vocabulary) -> Result<Formula, CliError> {
        Ok(parse(text, &ParseContext::new(vocab, &self.quants).with_builtins(&self.builtins))?)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// `@file` reads the formula from a file.
fn formula_text(arg: &str) -> Result<String, CliError> {
    // `@name(` is a built-in atom, anything else after `@` is a path
    let is_atom = regex::Regex::new(r"^@[A-Za-z:_0-9]+\s*\(").expect("static regex").is_match(arg);
    match arg.strip_prefix('@') {
        Some(path) if !is_atom => Ok(read(Path::new(path))?.trim().to_string()),
        _ => Ok(arg.to_string()),
    }
}

fn load_model(path: &Path) -> Result<BrModel, CliError> {
    Ok(parse_model(&read(path)?)?)
}

fn parse_vocab(spec: &str) -> Result<Vocabulary, CliError> {
    let mut v = Vocabulary::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (r, k) = item.split_once(':').ok_or_else(|| CliError::Usage(format!("vocabulary item `{item}` needs NAME:ARITY")))?;
        let k = k.parse().map_err(|_| CliError::Usage(format!("bad arity in `{item}`")))?;
        v.insert(r.to_string(), k);
    }
    Ok(v)
}

/// Guesses arities from atoms `R(x,y)`; quantifier applications contain `:`
/// and registered quantifier names are skipped.
pub fn infer_vocab(text: &str, quants: &QuantifierRegistry) -> Vocabulary {
    let atom = Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\(([^():]*)\)").expect("static pattern");
    let mut v = Vocabulary::new();
    for c in atom.captures_iter(text) {
        let start = c.get(0).unwrap().start();
        if start > 0 && text[..start].ends_with(['@', ':']) {
            continue;
        }
        let name = &c[1];
        if quants.get(name).is_some() {
            continue;
        }
        let args = c[2].trim();
        let k = if args.is_empty() { 0 } else { args.split(',').count() };
        v.entry(name.to_string()).or_insert(k);
    }
    v
}

fn vocab_for(env: &Env, text: &str, vocab: Option<&str>) -> Result<Vocabulary, CliError> {
    match vocab {
        Some(s) => parse_vocab(s),
        None => Ok(infer_vocab(text, &env.quants)),
    }
}

fn rational(s: &str) -> Result<Rational, CliError> {
    s.parse().map_err(|e: brlogic::sets::SetError| CliError::Usage(format!("--eps: {e}")))
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    let env = Env::load(&cli)?;
    match cli.command {
        Command::Parse { formula, vocab, model } => {
            let text = formula_text(&formula)?;
            let voc = match (&vocab, &model) {
                (None, Some(path)) => load_model(path)?.vocabulary(),
                _ => vocab_for(&env, &text, vocab.as_deref())?,
            };
            Ok(Output::ok(format!("{}\n", env.formula(&text, &voc)?)))
        }
        Command::Eval { model, formula, assign } => {
            let m = load_model(&model)?;
            let phi = env.formula(&formula_text(&formula)?, &m.vocabulary())?;
            let a = match assign {
                Some(s) => Assignment::parse(&s).map_err(CliError::Usage)?,
                None => Assignment::new(),
            };
            Ok(Output::ok(format!("{}\n", env.evaluator().eval(&m, &phi, &a)?)))
        }
        Command::Ef { model, model2, rank, builtins } => {
            let (m1, m2) = (load_model(&model)?, load_model(&model2)?);
            let mut rels = Vec::new();
            for name in builtins.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                rels.push(env.builtins.lookup(name).ok_or_else(|| CliError::Usage(format!("unknown built-in `{name}`")))?);
            }
            Ok(Output::ok(format!("{}\n", ef_equivalent(&m1, &m2, rank, &rels)?)))
        }
        Command::Transform { which } => transform(&env, which),
        Command::AnalyzeSet { set, n, eps } => {
            let s: NumericalSet = set.parse()?;
            let (f, w) = f_s_omega_s(&s, n);
            let mut out = format!("f={f} omega={w}\n");
            if let Some(e) = eps {
                let e = rational(&e)?;
                writeln!(out, "loose: {}", looseness_line(&loose_at(&s, n, e))).unwrap();
                writeln!(out, "pseudoloose: {}", looseness_line(&pseudoloose_at(&s, n, e, WordPolicy::default()))).unwrap();
            }
            Ok(Output::ok(out))
        }
        Command::Mulext { n, k, model } => mulext(n, k, model.as_deref()),
        Command::Pipeline { set, n, eps, k } => {
            let s: NumericalSet = set.parse()?;
            let r = synthesize_multiplication(&s, n, rational(&eps)?, k)?;
            Ok(Output { text: r.to_string(), ok: r.full })
        }
        Command::Check { suite, seed } => check(&suite, seed.unwrap_or(DEFAULT_SEED)),
        Command::Gen { what } => {
            let m = match what {
                Gen::Word { word } => word_model(&word)?,
                Gen::Powerset { k } => powerset_structure(k, DEFAULT_POWERSET_CAP)?,
                Gen::Arith { n, k } => recipe_seed(n, k)?.0.to_br_model()?,
            };
            Ok(Output::ok(format!("{m}\n")))
        }
    }
}

fn looseness_line(r: &LoosenessReport) -> String {
    let mut s = r.verdict.to_string();
    if let Some(t) = r.witness_t {
        write!(s, " t={t}").unwrap();
    }
    if let Some(w) = &r.witness_word {
        write!(s, " w={w}").unwrap();
    }
    if let Some(g) = r.gamma_value {
        write!(s, " gamma={g}").unwrap();
    }
    if r.policy_limited {
        s.push_str(" (limited to the word policy)");
    }
    s
}

fn transform(env: &Env, which: Transform) -> Result<Output, CliError> {
    let phi_of = |text: &str, vocab: Option<&str>, extra: &str| -> Result<Formula, CliError> {
        let voc = vocab_for(env, &format!("{text} {extra}"), vocab)?;
        env.formula(text, &voc)
    };
    let out = match which {
        Transform::Subst { formula, vocab, subs } => {
            let text = formula_text(&formula)?;
            let all = subs.join(" ");
            let voc = vocab_for(env, &format!("{text} {all}"), vocab.as_deref())?;
            let phi = env.formula(&text, &voc)?;
            let head = Regex::new(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\(([^()]*)\)\s*:=\s*(.+)$").expect("static pattern");
            let mut map = Substitution::new();
            for s in &subs {
                let c = head.captures(s).ok_or_else(|| CliError::Usage(format!("substitution `{s}` must read R(x,..) := formula")))?;
                let params: Vec<String> = c[2].split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
                map.insert(c[1].to_string(), (params, env.formula(&c[3], &voc)?));
            }
            substitute(&phi, &map)?
        }
        Transform::Rel { formula, vocab, var, psi } => {
            let text = formula_text(&formula)?;
            let psi_text = formula_text(&psi)?;
            let phi = phi_of(&text, vocab.as_deref(), &psi_text)?;
            let psi = phi_of(&psi_text, vocab.as_deref(), &text)?;
            relativize_formula(&phi, &var, &psi, &env.quants)?
        }
        Transform::Mso { formula } => {
            let text = formula_text(&formula)?;
            let mut voc = Vocabulary::new();
            voc.insert("E".into(), 2);
            mso_translate(&env.formula(&text, &voc)?)?
        }
    };
    Ok(Output::ok(format!("{out}\n")))
}

fn mulext(n: Option<usize>, k: usize, model: Option<&Path>) -> Result<Output, CliError> {
    let (seed, a) = match (model, n) {
        (Some(path), _) => (PartialArithModel::from_br_model(&load_model(path)?)?, None),
        (None, Some(n)) => {
            let (p, a) = recipe_seed(n, k)?;
            (p, Some(a))
        }
        (None, None) => return Err(CliError::Usage("mulext needs --n or --model".into())),
    };
    let n = seed.size();
    let hyp = check_mulext_hypothesis(&seed, k)?;
    let mut probes = vec![1];
    probes.extend(a);
    probes.extend(hyp);
    probes.sort_unstable();
    probes.dedup();
    probes.retain(|&p| p < n);
    let trace = pi_extend(&seed, k, &probes)?;
    let full = trace.result().is_full();
    let mut out = format!("n={n} k={k} |M|={}\n", seed.len());
    if let Some(a) = a {
        writeln!(out, "recipe a*={a}").unwrap();
    }
    match hyp {
        Some(w) => writeln!(out, "hypothesis: a*={w}").unwrap(),
        None => writeln!(out, "hypothesis: no witness").unwrap(),
    }
    write!(out, "{trace}").unwrap();
    if let Some((i, a)) = trace.doubling_violation() {
        writeln!(out, "doubling fails at i={i}, a={a}").unwrap();
    }
    writeln!(out, "full multiplication: {}", if full { "reached" } else { "not reached" }).unwrap();
    let ok = (hyp.is_none() || full) && trace.doubling_violation().is_none();
    Ok(Output { text: out, ok })
}

fn check(name: &str, seed: u64) -> Result<Output, CliError> {
    if name != "all" {
        let r = suites::run_suite(name, seed)?;
        return Ok(Output { text: format!("{r}\n"), ok: r.pass });
    }
    let mut out = String::new();
    let mut table = String::new();
    let mut ok = true;
    for s in SUITES {
        let r = suites::run_suite(s.name, seed)?;
        writeln!(out, "{r}\n").unwrap();
        writeln!(table, "{:<20} {:<4} {:>8.2}s", r.name, if r.pass { "PASS" } else { "FAIL" }, r.seconds).unwrap();
        ok &= r.pass;
    }
    out.push_str(&table);
    Ok(Output { text: out, ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_inference() {
        let q = builtin_quantifiers();
        let v = infer_vocab("E x. (U(x) & I(y: E(x,y); z: P()) & @set:sq(x) & @plus(x,x,x))", &q);
        let want: Vocabulary = [("U".to_string(), 1), ("E".to_string(), 2), ("P".to_string(), 0)].into();
        assert_eq!(v, want);
    }

    #[test]
    fn vocab_flag() {
        assert_eq!(parse_vocab("U:1, E:2").unwrap().len(), 2);
        assert!(matches!(parse_vocab("U"), Err(CliError::Usage(_))));
    }
}
