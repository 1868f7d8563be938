//! Synthetic financial-report generator.
//!
//! Each monetary sentence is one or two clauses; each clause instantiates a
//! template of one of eight kinds, distinguished by which entity types it
//! contains. With the default weights the expected count of every entity type
//! is proportional to the support of the annotated reference corpus
//! (kpi 16849, cy 11498, py 5057, increase 356, decrease 230, davon 8827,
//! davon-cy 8443, davon-py 4382): every clause has exactly one kpi, so the
//! weights are per-kind kpi counts solved from those totals.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize_words;
use super::types::{Document, Entity, EntityType, Relation, Sentence};
use crate::error::{Error, Result};
use crate::numerics::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    KpiCyPy,
    KpiCy,
    Increase,
    Decrease,
    DavonCyPy,
    DavonCy,
    KpiCyDavonCy,
    KpiCyDavon,
}

impl ClauseKind {
    pub const ALL: [ClauseKind; 8] = [
        ClauseKind::KpiCyPy,
        ClauseKind::KpiCy,
        ClauseKind::Increase,
        ClauseKind::Decrease,
        ClauseKind::DavonCyPy,
        ClauseKind::DavonCy,
        ClauseKind::KpiCyDavonCy,
        ClauseKind::KpiCyDavon,
    ];

    fn uses_davon(self) -> bool {
        matches!(
            self,
            ClauseKind::DavonCyPy | ClauseKind::DavonCy | ClauseKind::KpiCyDavonCy | ClauseKind::KpiCyDavon
        )
    }

    /// Gold links between slots.
    fn links(self) -> &'static [(&'static str, &'static str)] {
        match self {
            ClauseKind::KpiCyPy => &[("kpi", "cy"), ("kpi", "py")],
            ClauseKind::KpiCy => &[("kpi", "cy")],
            ClauseKind::Increase => &[("kpi", "inc"), ("kpi", "cy"), ("kpi", "py")],
            ClauseKind::Decrease => &[("kpi", "dec"), ("kpi", "cy"), ("kpi", "py")],
            ClauseKind::DavonCyPy => &[("kpi", "davon"), ("davon", "dcy"), ("davon", "dpy")],
            ClauseKind::DavonCy => &[("kpi", "davon"), ("davon", "dcy")],
            ClauseKind::KpiCyDavonCy => &[("kpi", "cy"), ("kpi", "davon"), ("davon", "dcy")],
            ClauseKind::KpiCyDavon => &[("kpi", "cy"), ("kpi", "davon")],
        }
    }

    fn templates(self, english: bool) -> &'static [&'static str] {
        match (self, english) {
            (ClauseKind::KpiCyPy, false) => &[
                "die {kpi} stiegen im Geschäftsjahr {year} auf {cy} (Vj. {py})",
                "der {kpi} belief sich auf {cy} (Vorjahr: {py})",
                "{kpi} betrugen {cy} nach {py} im Vorjahr",
                "im Geschäftsjahr {year} sanken die {kpi} auf {cy} (Vj. {py})",
            ],
            (ClauseKind::KpiCyPy, true) => &[
                "the {kpi} increased to {cy} (prior year: {py})",
                "the {kpi} decreased to {cy} (prior year: {py})",
            ],
            (ClauseKind::KpiCy, false) => &[
                "der {kpi} betrug {cy}",
                "die {kpi} lagen bei {cy}",
                "es wurden {kpi} in Höhe von {cy} ausgewiesen",
                "{kpi} von {cy} wurden erfasst",
            ],
            (ClauseKind::KpiCy, true) => &["the {kpi} amounted to {cy}", "the {kpi} were {cy}"],
            (ClauseKind::Increase, false) => &[
                "der {kpi} erhöhte sich um {inc} auf {cy} (Vj. {py})",
                "die {kpi} stiegen um {inc} auf {cy} (Vj. {py})",
            ],
            (ClauseKind::Increase, true) => &["the {kpi} increased by {inc} to {cy} (prior year: {py})"],
            (ClauseKind::Decrease, false) => &[
                "der {kpi} verringerte sich um {dec} auf {cy} (Vj. {py})",
                "die {kpi} sanken um {dec} auf {cy} (Vj. {py})",
            ],
            (ClauseKind::Decrease, true) => &["the {kpi} decreased by {dec} to {cy} (prior year: {py})"],
            (ClauseKind::DavonCyPy, false) => &[
                "die {kpi} enthalten {davon} in Höhe von {dcy} (Vj. {dpy})",
                "in den {kpi} sind {dcy} (Vj. {dpy}) für {davon} enthalten",
                "von den {kpi} entfallen {dcy} (Vj. {dpy}) auf {davon}",
            ],
            (ClauseKind::DavonCyPy, true) => &["the {kpi} include {davon} of {dcy} (prior year: {dpy})"],
            (ClauseKind::DavonCy, false) => &[
                "die {kpi} enthalten {davon} in Höhe von {dcy}",
                "von den {kpi} entfallen {dcy} auf {davon}",
            ],
            (ClauseKind::DavonCy, true) => &["the {kpi} include {davon} of {dcy}"],
            (ClauseKind::KpiCyDavonCy, false) => &[
                "die {kpi} von {cy} enthalten {davon} in Höhe von {dcy}",
                "die {kpi} betrugen {cy}, davon {davon} {dcy}",
            ],
            (ClauseKind::KpiCyDavonCy, true) => &["the {kpi} of {cy} include {davon} of {dcy}"],
            (ClauseKind::KpiCyDavon, false) => &[
                "die {kpi} von {cy} enthalten auch {davon}",
                "die {kpi} betrugen {cy} und umfassen insbesondere {davon}",
            ],
            (ClauseKind::KpiCyDavon, true) => &["the {kpi} of {cy} also include {davon}"],
        }
    }
}

fn slot_type(slot: &str) -> Option<EntityType> {
    Some(match slot {
        "kpi" => EntityType::Kpi,
        "cy" => EntityType::Cy,
        "py" => EntityType::Py,
        "inc" => EntityType::Increase,
        "dec" => EntityType::Decrease,
        "davon" => EntityType::Davon,
        "dcy" => EntityType::DavonCy,
        "dpy" => EntityType::DavonPy,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseWeights {
    pub kpi_cy_py: f64,
    pub kpi_cy: f64,
    pub increase: f64,
    pub decrease: f64,
    pub davon_cy_py: f64,
    pub davon_cy: f64,
    pub kpi_cy_davon_cy: f64,
    pub kpi_cy_davon: f64,
}

impl Default for ClauseWeights {
    fn default() -> Self {
        Self {
            kpi_cy_py: 4471.0,
            kpi_cy: 2965.0,
            increase: 356.0,
            decrease: 230.0,
            davon_cy_py: 4382.0,
            davon_cy: 969.0,
            kpi_cy_davon_cy: 3092.0,
            kpi_cy_davon: 384.0,
        }
    }
}

impl ClauseWeights {
    fn of(&self, kind: ClauseKind) -> f64 {
        match kind {
            ClauseKind::KpiCyPy => self.kpi_cy_py,
            ClauseKind::KpiCy => self.kpi_cy,
            ClauseKind::Increase => self.increase,
            ClauseKind::Decrease => self.decrease,
            ClauseKind::DavonCyPy => self.davon_cy_py,
            ClauseKind::DavonCy => self.davon_cy,
            ClauseKind::KpiCyDavonCy => self.kpi_cy_davon_cy,
            ClauseKind::KpiCyDavon => self.kpi_cy_davon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub kpi: Vec<String>,
    pub davon: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicons {
    fn default() -> Self {
        Self {
            kpi: strings(&[
                "Umsatzerlöse",
                "Umsatz",
                "Jahresüberschuss",
                "Jahresfehlbetrag",
                "Materialaufwand",
                "Personalaufwand",
                "sonstigen betrieblichen Erträge",
                "sonstigen betrieblichen Aufwendungen",
                "sonstigen finanziellen Vermögenswerte",
                "Eigenkapital",
                "Bilanzsumme",
                "Zinsaufwendungen",
                "Abschreibungen",
                "Rückstellungen",
                "Forderungen aus Lieferungen und Leistungen",
                "Ergebnis vor Steuern",
                "Investitionen",
                "liquiden Mittel",
                "Verbindlichkeiten gegenüber Kreditinstituten",
                "Rohergebnis",
                "Finanzergebnis",
                "Vorräte",
                "revenue",
                "total costs",
                "net income",
                "operating profit",
                "personnel expenses",
                "interest expenses",
            ]),
            davon: strings(&[
                "Wertberichtigungen",
                "Aufwendungen aus der Aufzinsung",
                "Entgelte für Factoring-Geschäfte",
                "Zuführungen zu den Pensionsrückstellungen",
                "Erträge aus verbundenen Unternehmen",
                "Mieterträge",
                "periodenfremde Erträge",
                "Aufwendungen für Altersversorgung",
                "Erträge aus der Auflösung von Rückstellungen",
                "Kursverluste",
                "Sozialabgaben",
                "Leasingverbindlichkeiten",
                "valuation allowances",
                "factoring fees",
                "rental income",
                "pension expenses",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub documents: usize,
    /// Monetary sentences per document; filler sentences come on top.
    pub sentences_per_document: usize,
    pub two_clause_rate: f64,
    pub english_rate: f64,
    /// Chance of a filler sentence without monetary numbers before each
    /// monetary sentence. Fillers carry no entities and are dropped by
    /// [`super::filter_sentences`].
    pub filler_rate: f64,
    pub weights: ClauseWeights,
    pub lexicons: Lexicons,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            documents: 200,
            sentences_per_document: 10,
            two_clause_rate: 0.3,
            english_rate: 0.15,
            filler_rate: 0.1,
            weights: ClauseWeights::default(),
            lexicons: Lexicons::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("generator config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        for kind in ClauseKind::ALL {
            let w = self.weights.of(kind);
            if !(w >= 0.0) {
                return Err(Error::Config(format!("weight for {kind:?} must be >= 0")));
            }
            if w > 0.0 && self.lexicons.kpi.is_empty() {
                return Err(Error::Config("lexicon `kpi` is empty".into()));
            }
            if w > 0.0 && kind.uses_davon() && self.lexicons.davon.is_empty() {
                return Err(Error::Config(format!("lexicon `davon` is empty but {kind:?} has weight")));
            }
        }
        if ClauseKind::ALL.iter().all(|k| self.weights.of(*k) == 0.0) {
            return Err(Error::Config("all clause weights are zero".into()));
        }
        for (name, p) in [
            ("two_clause_rate", self.two_clause_rate),
            ("english_rate", self.english_rate),
            ("filler_rate", self.filler_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

const FILLERS: &[&str] = &[
    "Die Gesellschaft hat ihren Sitz in Bonn.",
    "Im Geschäftsjahr {year} waren durchschnittlich {count} Mitarbeiter beschäftigt.",
    "Der Lagebericht wurde nach den Vorschriften des HGB aufgestellt.",
    "Wesentliche Ereignisse nach dem Abschlussstichtag sind nicht eingetreten.",
    "The company employed {count} people on average in {year}.",
];

#[derive(Debug, Clone, Copy)]
enum MoneyStyle {
    MioEuro,
    MioDotEuro,
    Teur,
    MrdEuro,
    Euro,
    DollarMillion,
}

impl MoneyStyle {
    const GERMAN: [MoneyStyle; 5] = [
        MoneyStyle::MioEuro,
        MoneyStyle::MioDotEuro,
        MoneyStyle::Teur,
        MoneyStyle::MrdEuro,
        MoneyStyle::Euro,
    ];

    /// Words before and after the number.
    fn frame(self) -> (&'static str, &'static str) {
        match self {
            MoneyStyle::MioEuro => ("", "Mio €"),
            MoneyStyle::MioDotEuro => ("", "Mio. €"),
            MoneyStyle::Teur => ("TEUR", ""),
            MoneyStyle::MrdEuro => ("", "Mrd €"),
            MoneyStyle::Euro => ("", "€"),
            MoneyStyle::DollarMillion => ("$", "million"),
        }
    }
}

fn number<R: Rng + ?Sized>(rng: &mut R, english: bool) -> String {
    let sep = if english { '.' } else { ',' };
    match rng.random_range(0..4) {
        0 => format!("{}", rng.random_range(1..1000)),
        1 => format!("{}{sep}{}", rng.random_range(0..100), rng.random_range(0..10)),
        2 => format!("{}{sep}{:02}", rng.random_range(0..100), rng.random_range(0..100)),
        _ => {
            let thousands = if english { ',' } else { '.' };
            format!("{}{thousands}{:03}", rng.random_range(1..100), rng.random_range(0..1000))
        }
    }
}

#[derive(Default)]
struct Builder {
    words: Vec<String>,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
}

impl Builder {
    fn text(&mut self, text: &str) {
        self.words.extend(tokenize_words(text));
    }

    fn entity(&mut self, text: &str, ty: EntityType) -> usize {
        let words = tokenize_words(text);
        let start = self.words.len();
        self.words.extend(words);
        self.entities.push(Entity::new(start, self.words.len() - 1, ty));
        self.entities.len() - 1
    }

    fn clause<R: Rng + ?Sized>(&mut self, kind: ClauseKind, english: bool, lex: &Lexicons, rng: &mut R) {
        let template = *kind.templates(english).choose(rng).expect("templates");
        let style = if english {
            MoneyStyle::DollarMillion
        } else {
            *MoneyStyle::GERMAN.choose(rng).expect("styles")
        };
        let mut slots: Vec<(&str, usize)> = Vec::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            self.text(&rest[..open]);
            let close = open + rest[open..].find('}').expect("closed slot");
            let slot = &rest[open + 1..close];
            match slot {
                "year" => self.text(&rng.random_range(2015..2024).to_string()),
                "kpi" => {
                    let w = lex.kpi.choose(rng).expect("validated");
                    slots.push((slot, self.entity(w, EntityType::Kpi)));
                }
                "davon" => {
                    let w = lex.davon.choose(rng).expect("validated");
                    slots.push((slot, self.entity(w, EntityType::Davon)));
                }
                money => {
                    let ty = slot_type(money).expect("known slot");
                    let (before, after) = style.frame();
                    self.text(before);
                    let n = number(rng, english);
                    slots.push((slot, self.entity(&n, ty)));
                    self.text(after);
                }
            }
            rest = &rest[close + 1..];
        }
        self.text(rest);
        for (a, b) in kind.links() {
            let find = |name: &str| slots.iter().find(|(s, _)| *s == name).map(|(_, i)| *i);
            let (ia, ib) = (find(a).expect("slot present"), find(b).expect("slot present"));
            self.relations.push(Relation::new(ia, ib));
        }
    }

    fn finish(mut self) -> Sentence {
        if let Some(first) = self.words.first_mut() {
            let mut cs = first.chars();
            if let Some(c) = cs.next() {
                *first = c.to_uppercase().chain(cs).collect();
            }
        }
        self.words.push(".".into());
        Sentence {
            words: self.words,
            entities: self.entities,
            relations: self.relations,
        }
    }
}

fn pick_kind<R: Rng + ?Sized>(weights: &ClauseWeights, rng: &mut R) -> ClauseKind {
    let total: f64 = ClauseKind::ALL.iter().map(|k| weights.of(*k)).sum();
    let mut x = rng.random::<f64>() * total;
    for k in ClauseKind::ALL {
        let w = weights.of(k);
        if x < w {
            return k;
        }
        x -= w;
    }
    *ClauseKind::ALL
        .iter()
        .rev()
        .find(|k| weights.of(**k) > 0.0)
        .expect("some weight positive")
}

fn filler<R: Rng + ?Sized>(rng: &mut R) -> Sentence {
    let text = FILLERS
        .choose(rng)
        .expect("fillers")
        .replace("{year}", &rng.random_range(2015..2024).to_string())
        .replace("{count}", &rng.random_range(10..900).to_string());
    Sentence::new(tokenize_words(&text))
}

/// Generates one monetary sentence.
pub fn generate_sentence<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Sentence {
    let english = rng.random::<f64>() < config.english_rate;
    let clauses = if rng.random::<f64>() < config.two_clause_rate { 2 } else { 1 };
    let mut b = Builder::default();
    if english && rng.random_bool(0.5) {
        b.text(&format!("In {}", rng.random_range(2015..2024)));
    }
    for c in 0..clauses {
        if c > 0 {
            b.text(if english { "while" } else { ", während" });
        }
        let kind = pick_kind(&config.weights, rng);
        b.clause(kind, english, &config.lexicons, rng);
    }
    b.finish()
}

/// Generates `config.documents` documents. Document `i` draws from its own
/// stream derived from `(seed, i)`.
pub fn generate_synthetic_corpus(config: &GeneratorConfig, seed: u64) -> Result<Vec<Document>> {
    config.validate()?;
    let docs = (0..config.documents)
        .map(|d| {
            let mut rng = stream(seed, Stream::Document(d as u64));
            let mut sentences = Vec::new();
            for _ in 0..config.sentences_per_document {
                if rng.random::<f64>() < config.filler_rate {
                    sentences.push(filler(&mut rng));
                }
                sentences.push(generate_sentence(config, &mut rng));
            }
            Document {
                id: format!("doc-{d:04}"),
                sentences,
            }
        })
        .collect();
    Ok(docs)
}

/// The English two-clause sentence used throughout the docs, with gold labels.
pub fn reference_example() -> Sentence {
    let mut b = Builder::default();
    b.text("In 2021 the");
    let k1 = b.entity("revenue", EntityType::Kpi);
    b.text("increased to $");
    let c1 = b.entity("100", EntityType::Cy);
    b.text("million (prior year: $");
    let p1 = b.entity("80", EntityType::Py);
    b.text("million) while the");
    let k2 = b.entity("total costs", EntityType::Kpi);
    b.text("decreased to $");
    let c2 = b.entity("50", EntityType::Cy);
    b.text("million (prior year: $");
    let p2 = b.entity("70", EntityType::Py);
    b.text("million)");
    b.relations = vec![
        Relation::new(k1, c1),
        Relation::new(k1, p1),
        Relation::new(k2, c2),
        Relation::new(k2, p2),
    ];
    b.finish()
}
