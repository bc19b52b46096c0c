//! Synthetic desk-scale benchmark generator.
//!
//! Three routing domains (law, finance, health) built from disjoint
//! content vocabularies over a shared pool of function words, plus two
//! out-of-distribution test sets: a shifted-vocabulary English set
//! (science questions) and a non-Latin-script set (Cyrillic). The
//! disjoint construction makes the domains separable by design, so a
//! correctly implemented router reaches high accuracy on it; the two OOD
//! sets exercise both rejection paths (unseen-but-tokenizable words, and
//! fully out-of-vocabulary text).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{write_examples, CorpusError, LabeledExample, OOD_LABEL};

pub const DOMAINS: [&str; 3] = ["law", "finance", "health"];

const LAW_WORDS: &[&str] = &[
    "contest", "will", "custody", "landlord", "tenant", "lease", "contract", "lawsuit",
    "court", "judge", "appeal", "verdict", "statute", "liability", "plaintiff", "defendant",
    "attorney", "evidence", "bail", "probate", "divorce", "alimony", "trademark", "patent",
    "arrest", "warrant", "testimony", "jury", "felony", "injunction", "deed", "notary",
];

const FINANCE_WORDS: &[&str] = &[
    "mortgage", "refinance", "dividend", "portfolio", "equity", "savings", "budget", "loan",
    "creditor", "interest", "invest", "stocks", "bonds", "retirement", "401k", "ira",
    "taxes", "deduction", "audit", "inflation", "brokerage", "annuity", "escrow", "credit",
    "overdraft", "compound", "yield", "hedge", "currency", "exchange", "payout", "broker",
];

const HEALTH_WORDS: &[&str] = &[
    "symptom", "fever", "dosage", "vaccine", "allergy", "diagnosis", "therapy", "nutrition",
    "cholesterol", "insulin", "migraine", "fracture", "antibiotic", "infection", "immune",
    "cardio", "wellness", "hydration", "protein", "vitamin", "exercise", "recovery",
    "surgery", "prescription", "pharmacy", "asthma", "diabetes", "anxiety", "posture",
    "stretching", "metabolism", "checkup",
];

const SCIENCE_WORDS: &[&str] = &[
    "photosynthesis", "quasar", "neutrino", "tectonic", "genome", "enzyme", "quantum",
    "gravity", "molecule", "isotope", "galaxy", "electron", "catalyst", "chromosome",
    "entropy", "velocity", "magnetism", "asteroid", "microbe", "polymer", "nebula",
    "photon", "mitosis", "thermodynamics", "crystalline", "bacterium", "supernova",
    "relativity", "osmosis", "plasma",
];

const CYRILLIC_WORDS: &[&str] = &[
    "право", "закон", "суд", "договор", "налог", "здоровье", "врач", "лекарство",
    "книга", "вопрос", "ответ", "слово", "город", "страна", "погода", "музыка",
    "история", "наука", "искусство", "дорога", "работа", "деньги", "время", "человек",
];

const FUNCTION_WORDS: &[&str] = &[
    "how", "do", "i", "what", "is", "the", "a", "my", "can", "to", "for", "when",
    "should", "does", "about", "get", "with", "if", "much", "long",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub per_domain_train: usize,
    pub per_domain_valid: usize,
    pub per_domain_test: usize,
    pub per_ood_set: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_domain_train: 1000,
            per_domain_valid: 200,
            per_domain_test: 200,
            per_ood_set: 500,
            seed: 17,
        }
    }
}

fn domain_words(domain: &str) -> &'static [&'static str] {
    match domain {
        "law" => LAW_WORDS,
        "finance" => FINANCE_WORDS,
        "health" => HEALTH_WORDS,
        other => panic!("unknown synthetic domain {other:?}"),
    }
}

/// One query: 2..=4 content words mixed with 2..=4 function words, first
/// word capitalized, question mark appended.
fn make_query(rng: &mut ChaCha8Rng, content: &[&str]) -> String {
    let n_content = rng.random_range(2..=4);
    let n_function = rng.random_range(2..=4);
    let mut words: Vec<&str> = Vec::with_capacity(n_content + n_function);
    for _ in 0..n_content {
        words.push(*content.choose(rng).unwrap());
    }
    for _ in 0..n_function {
        words.push(*FUNCTION_WORDS.choose(rng).unwrap());
    }
    words.shuffle(rng);
    let mut query = String::new();
    for (i, w) in words.iter().enumerate() {
        if i == 0 {
            let mut chars = w.chars();
            if let Some(first) = chars.next() {
                query.extend(first.to_uppercase());
                query.push_str(chars.as_str());
            }
        } else {
            query.push(' ');
            query.push_str(w);
        }
    }
    query.push('?');
    query
}

fn make_cyrillic_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(3..=7);
    let words: Vec<&str> = (0..n)
        .map(|_| *CYRILLIC_WORDS.choose(rng).unwrap())
        .collect();
    format!("{}?", words.join(" "))
}

fn make_examples(
    rng: &mut ChaCha8Rng,
    count: usize,
    label: &str,
    content: Option<&[&str]>,
) -> Vec<LabeledExample> {
    (0..count)
        .map(|_| {
            let text = match content {
                Some(words) => make_query(rng, words),
                None => make_cyrillic_query(rng),
            };
            LabeledExample::new(text, label)
        })
        .collect()
}

/// Writes the synthetic benchmark (split files plus `benchmark.toml`)
/// into `dir` and returns the manifest path. Deterministic for a fixed
/// config.
pub fn generate(dir: impl AsRef<Path>, config: &SynthConfig) -> Result<PathBuf, CorpusError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut manifest = String::from("schema_version = 1\n");
    let domain_list = DOMAINS.map(|d| format!("\"{d}\"")).join(", ");
    let _ = writeln!(manifest, "domains = [{domain_list}]");
    manifest.push_str("unsafe_set = []\n");

    let emit = |manifest: &mut String,
                    name: &str,
                    role: &str,
                    category: Option<&str>,
                    file: &str,
                    examples: &[LabeledExample]|
     -> Result<(), CorpusError> {
        write_examples(dir.join(file), examples)?;
        manifest.push_str("\n[[splits]]\n");
        let _ = writeln!(manifest, "name = \"{name}\"");
        let _ = writeln!(manifest, "role = \"{role}\"");
        if let Some(cat) = category {
            let _ = writeln!(manifest, "ood_category = \"{cat}\"");
        }
        let _ = writeln!(manifest, "path = \"{file}\"");
        let _ = writeln!(manifest, "expected_count = {}", examples.len());
        Ok(())
    };

    for domain in DOMAINS {
        let words = domain_words(domain);
        for (suffix, role, count) in [
            ("train", "train", config.per_domain_train),
            ("valid", "valid", config.per_domain_valid),
            ("test", "test_id", config.per_domain_test),
        ] {
            let examples = make_examples(&mut rng, count, domain, Some(words));
            let file = format!("{domain}_{suffix}.jsonl");
            emit(&mut manifest, &format!("{domain}_{suffix}"), role, None, &file, &examples)?;
        }
    }

    let science = make_examples(&mut rng, config.per_ood_set, OOD_LABEL, Some(SCIENCE_WORDS));
    emit(
        &mut manifest,
        "science_qa",
        "test_ood",
        Some("other_domain"),
        "science_qa.jsonl",
        &science,
    )?;
    let cyrillic = make_examples(&mut rng, config.per_ood_set, OOD_LABEL, None);
    emit(
        &mut manifest,
        "cyrillic_qa",
        "test_ood",
        Some("other_language"),
        "cyrillic_qa.jsonl",
        &cyrillic,
    )?;

    let manifest_path = dir.join("benchmark.toml");
    std::fs::write(&manifest_path, manifest).map_err(|source| CorpusError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(manifest_path)
}
