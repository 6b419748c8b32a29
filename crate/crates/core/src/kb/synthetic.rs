//! Seeded synthetic two-tier corpus, used as a stand-in for a real
//! clinical knowledge base in tests, demos and the benchmark.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KnowledgeBase;
use crate::types::{
    canonical_department, Document, DocumentId, Tier, UrgencyLevel, TEST_ID_KEY, URGENCY_KEY,
};

pub const DEFAULT_DEPARTMENTS: [&str; 3] = ["cardiology", "endocrinology", "gastroenterology"];
pub const DEFAULT_ITEMS_PER_DEPARTMENT: usize = 4;

/// Keywords drawn per item.
const KEYWORDS_PER_ITEM: usize = 3;

struct CatalogItem {
    slug: &'static str,
    name: &'static str,
    urgency: UrgencyLevel,
    keywords: &'static [&'static str],
    note: &'static str,
}

const fn item(
    slug: &'static str,
    name: &'static str,
    urgency: UrgencyLevel,
    keywords: &'static [&'static str],
    note: &'static str,
) -> CatalogItem {
    CatalogItem {
        slug,
        name,
        urgency,
        keywords,
        note,
    }
}

use UrgencyLevel::{Priority, Routine, Urgent};

const CARDIOLOGY: &[CatalogItem] = &[
    item("troponin_i", "High-sensitivity troponin I", Urgent,
        &["chest pain", "exertion", "diaphoresis", "jaw pain", "radiating arm pain"],
        "Elevated values indicate myocardial injury."),
    item("ecg_12_lead", "12-lead electrocardiogram", Urgent,
        &["palpitations", "chest pain", "syncope", "irregular heartbeat"],
        "Detects arrhythmia, ischemia and conduction block."),
    item("echocardiogram", "Transthoracic echocardiogram", Priority,
        &["dyspnea", "ankle edema", "heart murmur", "orthopnea"],
        "Assesses ventricular function and valve structure."),
    item("bnp", "B-type natriuretic peptide", Priority,
        &["dyspnea", "ankle edema", "orthopnea", "weight gain"],
        "Raised levels support a heart failure diagnosis."),
    item("lipid_panel", "Fasting lipid panel", Routine,
        &["hypercholesterolemia", "xanthoma", "family history of coronary disease", "obesity"],
        "Quantifies LDL, HDL and triglycerides for risk stratification."),
    item("holter_monitor", "24-hour Holter monitor", Routine,
        &["palpitations", "dizziness", "syncope", "irregular heartbeat"],
        "Captures intermittent arrhythmias over a full day."),
    item("stress_test", "Exercise stress test", Priority,
        &["chest tightness", "exertion", "dyspnea on exertion", "angina"],
        "Provokes ischemia under controlled workload."),
];

const ENDOCRINOLOGY: &[CatalogItem] = &[
    item("hba1c", "Glycated hemoglobin (HbA1c)", Routine,
        &["polyuria", "polydipsia", "blurred vision", "slow wound healing"],
        "Reflects average glycemia over three months."),
    item("fasting_glucose", "Fasting plasma glucose", Priority,
        &["polyuria", "excessive thirst", "fatigue", "unexplained weight loss"],
        "Screens for diabetes mellitus."),
    item("tsh", "Thyroid-stimulating hormone", Routine,
        &["fatigue", "weight gain", "cold intolerance", "hair loss"],
        "First-line screen for thyroid dysfunction."),
    item("free_t4", "Free thyroxine (free T4)", Routine,
        &["tremor", "heat intolerance", "unexplained weight loss", "palpitations"],
        "Confirms hyper- or hypothyroidism."),
    item("cortisol_am", "Morning serum cortisol", Priority,
        &["fatigue", "hypotension", "hyperpigmentation", "salt craving"],
        "Low values suggest adrenal insufficiency."),
    item("serum_ketones", "Serum beta-hydroxybutyrate", Urgent,
        &["vomiting", "excessive thirst", "confusion", "fruity breath"],
        "Detects diabetic ketoacidosis."),
    item("pth_calcium", "Parathyroid hormone with calcium", Routine,
        &["bone pain", "kidney stones", "constipation", "muscle weakness"],
        "Evaluates calcium metabolism disorders."),
];

const GASTROENTEROLOGY: &[CatalogItem] = &[
    item("lipase", "Serum lipase", Urgent,
        &["epigastric pain", "vomiting", "pain radiating to back", "nausea"],
        "Marked elevation indicates acute pancreatitis."),
    item("liver_panel", "Liver function panel", Priority,
        &["jaundice", "dark urine", "right upper quadrant pain", "pruritus"],
        "Measures transaminases, bilirubin and alkaline phosphatase."),
    item("fit", "Fecal immunochemical test", Priority,
        &["rectal bleeding", "anemia", "change in bowel habits", "unexplained weight loss"],
        "Detects occult lower gastrointestinal bleeding."),
    item("h_pylori_breath", "Urea breath test for H. pylori", Routine,
        &["dyspepsia", "bloating", "epigastric pain", "early satiety"],
        "Identifies active Helicobacter pylori infection."),
    item("ttg_iga", "Tissue transglutaminase IgA", Routine,
        &["chronic diarrhea", "bloating", "unexplained weight loss", "iron deficiency"],
        "Serologic screen for celiac disease."),
    item("abdominal_ultrasound", "Abdominal ultrasound", Priority,
        &["right upper quadrant pain", "jaundice", "abdominal distension", "nausea"],
        "Images gallbladder, biliary tree and liver."),
    item("upper_endoscopy", "Upper endoscopy", Urgent,
        &["dysphagia", "hematemesis", "melena", "persistent vomiting"],
        "Direct visualisation of esophagus, stomach and duodenum."),
];

const GENERIC_KEYWORDS: &[&str] = &[
    "fever", "rash", "cough", "headache", "joint pain", "back pain", "night sweats",
    "numbness", "sore throat", "insomnia", "itching", "swollen glands", "muscle cramps",
    "blurred vision", "hoarseness", "frequent urination",
];

fn catalog(department: &str) -> &'static [CatalogItem] {
    match department {
        "cardiology" => CARDIOLOGY,
        "endocrinology" => ENDOCRINOLOGY,
        "gastroenterology" => GASTROENTEROLOGY,
        _ => &[],
    }
}

fn display_name(department: &str) -> String {
    department
        .split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One generated test, with the keywords its document mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticTest {
    pub test_id: String,
    pub name: String,
    pub department: String,
    pub urgency: UrgencyLevel,
    pub keywords: Vec<String>,
    pub doc_id: DocumentId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub kb: KnowledgeBase,
    pub tests: Vec<SyntheticTest>,
    /// Symptom keyword → test ids whose documents mention it.
    pub ground_truth: BTreeMap<String, BTreeSet<String>>,
}

impl SyntheticCorpus {
    pub fn test(&self, test_id: &str) -> Option<&SyntheticTest> {
        self.tests.iter().find(|t| t.test_id == test_id)
    }

    /// Test ids relevant to any of `keywords`.
    pub fn relevant_for<'a>(&self, keywords: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
        keywords
            .into_iter()
            .filter_map(|k| self.ground_truth.get(k))
            .flatten()
            .cloned()
            .collect()
    }
}

/// Deterministic for a given `(seed, departments, items_per_department)`.
///
/// Produces one department document per department plus
/// `items_per_department` item documents each. Known departments draw from
/// a built-in test catalogue; others (and overflow) get generic panels.
pub fn generate_synthetic_corpus(
    seed: u64,
    departments: &[&str],
    items_per_department: usize,
) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::new();
    let mut all_tests = Vec::new();
    let mut ground_truth: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();

    for raw in departments {
        let department = canonical_department(raw);
        if department.is_empty() || !seen.insert(department.clone()) {
            continue;
        }
        let pretty = display_name(&department);
        let pool = catalog(&department);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);

        let mut dept_tests = Vec::with_capacity(items_per_department);
        let mut item_docs = Vec::with_capacity(items_per_department);
        for n in 0..items_per_department {
            let t = match order.get(n) {
                Some(&i) => {
                    let c = &pool[i];
                    let mut kw: Vec<&str> = c.keywords.to_vec();
                    kw.shuffle(&mut rng);
                    kw.truncate(KEYWORDS_PER_ITEM);
                    (c.slug.to_string(), c.name.to_string(), c.urgency, kw, c.note.to_string())
                }
                None => {
                    let k = n - pool.len() + 1;
                    let mut kw: Vec<&str> = GENERIC_KEYWORDS.to_vec();
                    kw.shuffle(&mut rng);
                    kw.truncate(KEYWORDS_PER_ITEM);
                    let urgency = UrgencyLevel::ALL[rng.random_range(0..3)];
                    (
                        format!("{department}_panel_{k}"),
                        format!("{pretty} assessment panel {k}"),
                        urgency,
                        kw,
                        format!("Specialist work-up used in {pretty}."),
                    )
                }
            };
            let (test_id, name, urgency, keywords, note) = t;
            let keywords: Vec<String> = keywords.into_iter().map(str::to_string).collect();
            let body = format!(
                "{name}. Indicated for patients presenting with {}. {note}",
                join_and(&keywords)
            );
            let doc_id = DocumentId::new(format!("item-{test_id}")).expect("non-empty id");
            let metadata = BTreeMap::from([
                (TEST_ID_KEY.to_string(), test_id.clone()),
                (URGENCY_KEY.to_string(), urgency.as_str().to_ascii_lowercase()),
                ("symptoms".to_string(), keywords.join("; ")),
            ]);
            let doc = Document::new(doc_id.clone(), Tier::Item, &department, name.clone(), body, metadata)
                .expect("generated item documents are valid");
            for k in &keywords {
                ground_truth.entry(k.clone()).or_default().insert(test_id.clone());
            }
            dept_tests.push(SyntheticTest {
                test_id,
                name,
                department: department.clone(),
                urgency,
                keywords,
                doc_id,
            });
            item_docs.push(doc);
        }

        let complaints: BTreeSet<&str> = dept_tests
            .iter()
            .flat_map(|t| t.keywords.iter().map(String::as_str))
            .collect();
        let names: Vec<&str> = dept_tests.iter().map(|t| t.name.as_str()).collect();
        let body = format!(
            "Department-level guidance for {pretty}. Common presenting complaints: {}. Commonly ordered tests: {}.",
            complaints.into_iter().collect::<Vec<_>>().join(", "),
            names.join(", ")
        );
        let dept_doc = Document::new(
            DocumentId::new(format!("dept-{department}")).expect("non-empty id"),
            Tier::Department,
            &department,
            format!("{pretty} clinical guidelines"),
            body,
            BTreeMap::new(),
        )
        .expect("generated department documents are valid");
        kb.insert(dept_doc).expect("unique department ids");
        for doc in item_docs {
            kb.insert(doc).expect("unique item ids");
        }
        all_tests.extend(dept_tests);
    }

    SyntheticCorpus {
        kb,
        tests: all_tests,
        ground_truth,
    }
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
