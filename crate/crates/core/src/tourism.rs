//! Deterministic tourism star schema: a `Reservation` fact table, sixteen
//! dimension tables and five preset cuboid queries.
//!
//! Review scores are a noisy linear function of the reservation's price and
//! duration, with coefficients drawn per review table from the seed and
//! written to `ground_truth.json`, so regressions over the presets have known
//! answers.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::star::{
    write_csv, ColumnDef, DimensionRef, Hierarchy, StarData, StarError, StarSchema, TableData, TableDef,
};
use crate::value::{ColumnType, Value};

pub const FACT_TABLE: &str = "Reservation";

/// Dimension tables in manifest order.
pub const DIMENSION_TABLES: [&str; 16] = [
    "Accommodation",
    "PointOfInterest",
    "CarRental",
    "Flight",
    "Ferry",
    "Taxi",
    "Tour",
    "Tourist",
    "GeographicalArea",
    "AccommodationReview",
    "CarRentalReview",
    "FlightReview",
    "FerryReview",
    "TourReview",
    "TaxiReview",
    "PointOfInterestReview",
];

/// Standard deviation of the Gaussian noise on every review score.
pub const NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Tiny,
    Small,
    Medium,
}

impl Scale {
    pub fn fact_rows(self) -> usize {
        match self {
            Scale::Tiny => 100,
            Scale::Small => 10_000,
            Scale::Medium => 100_000,
        }
    }

    pub fn parse(s: &str) -> Option<Scale> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Some(Scale::Tiny),
            "small" => Some(Scale::Small),
            "medium" => Some(Scale::Medium),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Tiny => "tiny",
            Scale::Small => "small",
            Scale::Medium => "medium",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    pub seed: u64,
    pub scale: Scale,
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("cannot write `{path}`: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Star(#[from] StarError),
}

/// Planted linear model of one review table's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub intercept: f64,
    pub price: f64,
    pub party_size: f64,
    pub duration_days: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub scale: Scale,
    pub fact_rows: usize,
    /// Keyed by review table.
    pub reviews: BTreeMap<String, PlantedModel>,
}

impl GroundTruth {
    pub fn model(&self, review_table: &str) -> Option<&PlantedModel> {
        self.reviews.get(review_table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuboidPreset {
    pub name: String,
    /// The six dimension tables, also the coordinate attribute names.
    pub dimensions: Vec<String>,
    pub codq: String,
    pub default_k: usize,
    /// Target attribute name.
    pub target: String,
    /// Review table whose score is the target.
    pub target_table: String,
    pub default_cuboid: String,
}

/// Column projected as the coordinate of each dimension table.
fn coordinate_column(table: &str) -> &'static str {
    match table {
        "Accommodation" => "category",
        "PointOfInterest" => "kind",
        "CarRental" | "Taxi" => "company",
        "Flight" => "airline",
        "Ferry" | "Tour" => "operator",
        "Tourist" => "age_band",
        "GeographicalArea" => "city",
        _ => "channel",
    }
}

fn snake(name: &str) -> String {
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

fn fk_column(table: &str) -> String {
    format!("{}_id", snake(table))
}

fn alias(i: usize) -> String {
    format!("d{i}")
}

fn preset(name: &str, dims: [&str; 6], target_table: &str, service: &str) -> CuboidPreset {
    let mut proj = Vec::new();
    let mut joins = Vec::new();
    for (i, d) in dims.iter().enumerate() {
        let a = alias(i);
        proj.push(format!("{a}.{} AS {d}:coordinate", coordinate_column(d)));
        joins.push(format!("JOIN {d} {a} ON r.{} = {a}.id", fk_column(d)));
    }
    let ti = dims
        .iter()
        .position(|d| *d == target_table)
        .expect("target table is a dimension");
    let target = format!("{}_score", snake(target_table));
    proj.extend([
        "r.price AS price:feature".to_string(),
        "r.party_size AS party_size:feature".to_string(),
        "r.duration_days AS duration_days:feature".to_string(),
        format!("{}.score AS {target}:target", alias(ti)),
        "r.id AS reservation_id:carry".to_string(),
    ]);
    let codq = format!(
        "SELECT {}\nFROM Reservation r\n{}\n",
        proj.join(",\n       "),
        joins.join("\n")
    );
    CuboidPreset {
        name: name.to_string(),
        dimensions: dims.iter().map(|s| s.to_string()).collect(),
        codq,
        default_k: 3,
        target,
        target_table: target_table.to_string(),
        default_cuboid: format!("{service}={},GeographicalArea=country", coordinate_column(service)),
    }
}

/// The five preset cuboids.
pub fn presets() -> Vec<CuboidPreset> {
    let by_service = |name: &str, service: &str| {
        let review = format!("{service}Review");
        preset(
            name,
            [
                "Accommodation",
                service,
                "GeographicalArea",
                "Tourist",
                &review,
                "AccommodationReview",
            ],
            &review,
            service,
        )
    };
    vec![
        by_service("FlightInformationCube", "Flight"),
        by_service("FerryInformationCube", "Ferry"),
        by_service("CarRentalInformationCube", "CarRental"),
        preset(
            "TourInformationCube",
            [
                "Accommodation",
                "CarRental",
                "Tourist",
                "GeographicalArea",
                "CarRentalReview",
                "AccommodationReview",
            ],
            "AccommodationReview",
            "CarRental",
        ),
        by_service("TaxiInformationCube", "Taxi"),
    ]
}

const GEO: [(&str, &str, &str); 24] = [
    ("Rome", "Lazio", "Italy"),
    ("Latina", "Lazio", "Italy"),
    ("Milan", "Lombardy", "Italy"),
    ("Bergamo", "Lombardy", "Italy"),
    ("Naples", "Campania", "Italy"),
    ("Salerno", "Campania", "Italy"),
    ("Barcelona", "Catalonia", "Spain"),
    ("Girona", "Catalonia", "Spain"),
    ("Seville", "Andalusia", "Spain"),
    ("Malaga", "Andalusia", "Spain"),
    ("Palma", "Balearics", "Spain"),
    ("Ibiza", "Balearics", "Spain"),
    ("Athens", "Attica", "Greece"),
    ("Piraeus", "Attica", "Greece"),
    ("Heraklion", "Crete", "Greece"),
    ("Chania", "Crete", "Greece"),
    ("Rhodes", "South Aegean", "Greece"),
    ("Mykonos", "South Aegean", "Greece"),
    ("Nice", "Provence", "France"),
    ("Marseille", "Provence", "France"),
    ("Ajaccio", "Corsica", "France"),
    ("Bastia", "Corsica", "France"),
    ("Lyon", "Auvergne-Rhone-Alpes", "France"),
    ("Grenoble", "Auvergne-Rhone-Alpes", "France"),
];

const AGE_BANDS: [(&str, &str); 6] = [
    ("18-24", "GenZ"),
    ("25-34", "Millennial"),
    ("35-44", "Millennial"),
    ("45-54", "GenX"),
    ("55-64", "Boomer"),
    ("65+", "Boomer"),
];

const CHANNELS: [&str; 3] = ["web", "app", "agency"];

fn col(name: &str, ty: ColumnType) -> ColumnDef {
    ColumnDef::new(name, ty)
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

/// Simple catalogue table: `id, name` plus categorical attribute columns.
fn catalogue(
    rng: &mut ChaCha8Rng,
    table: &str,
    rows: usize,
    attrs: &[(&str, &[&str])],
) -> (Vec<ColumnDef>, Vec<Vec<Value>>) {
    let mut cols = vec![col("id", ColumnType::Integer), col("name", ColumnType::Text)];
    cols.extend(attrs.iter().map(|(n, _)| col(n, ColumnType::Text)));
    let data = (0..rows)
        .map(|i| {
            let mut row: Vec<Value> = vec![(i as i64 + 1).into(), format!("{table} {}", i + 1).as_str().into()];
            row.extend(attrs.iter().map(|(_, opts)| Value::from(pick(rng, opts))));
            row
        })
        .collect();
    (cols, data)
}

/// Generates every table in memory.
pub fn generate_data(seed: u64, scale: Scale) -> Result<(StarData, GroundTruth), StarError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scale.fact_rows();
    type Columns = (Vec<ColumnDef>, Vec<Vec<Value>>);
    type Table = (String, Vec<ColumnDef>, Vec<Vec<Value>>);
    let mut tables: Vec<Table> = Vec::new();

    fn add(tables: &mut Vec<Table>, name: &str, (cols, rows): Columns) {
        tables.push((name.to_string(), cols, rows));
    }

    add(
        &mut tables,
        "Accommodation",
        catalogue(
            &mut rng,
            "Accommodation",
            40,
            &[
                ("category", &["hotel", "bnb", "hostel", "apartment"]),
                ("board", &["room_only", "breakfast", "half_board", "full_board"]),
            ],
        ),
    );
    add(
        &mut tables,
        "PointOfInterest",
        catalogue(
            &mut rng,
            "PointOfInterest",
            30,
            &[("kind", &["museum", "beach", "park", "monument", "market"])],
        ),
    );
    add(
        &mut tables,
        "CarRental",
        catalogue(
            &mut rng,
            "CarRental",
            15,
            &[
                ("company", &["Hertz", "Avis", "Europcar", "Sixt"]),
                ("car_class", &["mini", "compact", "suv", "van"]),
            ],
        ),
    );
    add(
        &mut tables,
        "Flight",
        catalogue(
            &mut rng,
            "Flight",
            25,
            &[
                ("airline", &["Aegean", "Iberia", "ITA", "AirFrance", "Vueling"]),
                ("cabin", &["economy", "premium", "business"]),
            ],
        ),
    );
    {
        let operators = ["Minoan", "Grimaldi", "Moby", "Corsica Linea", "Balearia"];
        let vessels = ["ropax", "fast_craft", "cruise_ferry"];
        let mut cols = vec![col("id", ColumnType::Integer), col("name", ColumnType::Text)];
        for c in ["operator", "vessel_type", "departure_city", "arrival_city", "route"] {
            cols.push(col(c, ColumnType::Text));
        }
        let rows = (0..12)
            .map(|i| {
                let from = GEO[rng.random_range(0..GEO.len())].0;
                let mut to = GEO[rng.random_range(0..GEO.len())].0;
                if to == from {
                    to = GEO[(GEO.iter().position(|g| g.0 == from).unwrap() + 1) % GEO.len()].0;
                }
                vec![
                    (i as i64 + 1).into(),
                    format!("Ferry {}", i + 1).as_str().into(),
                    pick(&mut rng, &operators).into(),
                    pick(&mut rng, &vessels).into(),
                    from.into(),
                    to.into(),
                    format!("{from}-{to}").as_str().into(),
                ]
            })
            .collect();
        add(&mut tables, "Ferry", (cols, rows));
    }
    add(
        &mut tables,
        "Taxi",
        catalogue(
            &mut rng,
            "Taxi",
            10,
            &[
                ("company", &["CityCab", "RadioTaxi", "Uber", "FreeNow"]),
                ("vehicle_type", &["sedan", "minivan", "electric"]),
            ],
        ),
    );
    add(
        &mut tables,
        "Tour",
        catalogue(
            &mut rng,
            "Tour",
            20,
            &[
                ("operator", &["Viator", "GetYourGuide", "Local Guides"]),
                ("theme", &["history", "food", "nature", "nightlife"]),
            ],
        ),
    );
    {
        let tourists = 500;
        let cols = vec![
            col("id", ColumnType::Integer),
            col("age_band", ColumnType::Text),
            col("generation", ColumnType::Text),
            col("nationality", ColumnType::Text),
            col("repeat_visitor", ColumnType::Boolean),
        ];
        let nations = ["IT", "ES", "GR", "FR", "DE", "UK", "US"];
        let rows = (0..tourists)
            .map(|i| {
                let (band, generation) = AGE_BANDS[rng.random_range(0..AGE_BANDS.len())];
                vec![
                    (i as i64 + 1).into(),
                    band.into(),
                    generation.into(),
                    pick(&mut rng, &nations).into(),
                    rng.random_bool(0.3).into(),
                ]
            })
            .collect();
        add(&mut tables, "Tourist", (cols, rows));
    }
    {
        let cols = vec![
            col("id", ColumnType::Integer),
            col("city", ColumnType::Text),
            col("region", ColumnType::Text),
            col("country", ColumnType::Text),
        ];
        let rows = GEO
            .iter()
            .enumerate()
            .map(|(i, (c, r, k))| vec![(i as i64 + 1).into(), (*c).into(), (*r).into(), (*k).into()])
            .collect();
        add(&mut tables, "GeographicalArea", (cols, rows));
    }

    // Fact measures first, then review scores derived from them.
    let catalogue_sizes: Vec<usize> = DIMENSION_TABLES[..9]
        .iter()
        .map(|t| tables.iter().find(|(n, _, _)| n == t).expect("generated above").2.len())
        .collect();
    let mut fact_rows = Vec::with_capacity(n);
    let mut measures = Vec::with_capacity(n);
    for i in 0..n {
        let party_size: i64 = rng.random_range(1..=6);
        let duration: i64 = rng.random_range(1..=21);
        let nightly: f64 = rng.random_range(40.0..180.0);
        let price = ((party_size as f64).sqrt() * duration as f64 * nightly * 100.0).round() / 100.0;
        let mut row: Vec<Value> = vec![(i as i64 + 1).into()];
        for &size in &catalogue_sizes {
            row.push(rng.random_range(1..=size as i64).into());
        }
        // Review rows share the reservation's id.
        row.extend((0..7).map(|_| Value::Integer(i as i64 + 1)));
        row.extend([price.into(), party_size.into(), duration.into()]);
        fact_rows.push(row);
        measures.push((price, party_size as f64, duration as f64));
    }

    let noise = Normal::new(0.0, NOISE_SD).expect("valid normal");
    let mut reviews = BTreeMap::new();
    for table in &DIMENSION_TABLES[9..] {
        let model = PlantedModel {
            intercept: (rng.random_range(2.0..4.0) * 1000.0f64).round() / 1000.0,
            price: (rng.random_range(-8e-4..8e-4) * 1e6f64).round() / 1e6,
            party_size: 0.0,
            duration_days: (rng.random_range(-0.1..0.1) * 1e4f64).round() / 1e4,
            noise_sd: NOISE_SD,
        };
        let cols = vec![
            col("id", ColumnType::Integer),
            col("channel", ColumnType::Text),
            col("verified", ColumnType::Boolean),
            col("score", ColumnType::Real),
        ];
        let rows = measures
            .iter()
            .enumerate()
            .map(|(i, &(price, _, duration))| {
                let score =
                    model.intercept + model.price * price + model.duration_days * duration + noise.sample(&mut rng);
                vec![
                    (i as i64 + 1).into(),
                    pick(&mut rng, &CHANNELS).into(),
                    rng.random_bool(0.7).into(),
                    ((score * 1e4).round() / 1e4).into(),
                ]
            })
            .collect();
        add(&mut tables, table, (cols, rows));
        reviews.insert(table.to_string(), model);
    }

    let mut fact_cols = vec![col("id", ColumnType::Integer)];
    fact_cols.extend(DIMENSION_TABLES.iter().map(|t| col(&fk_column(t), ColumnType::Integer)));
    fact_cols.extend([
        col("price", ColumnType::Real),
        col("party_size", ColumnType::Integer),
        col("duration_days", ColumnType::Integer),
    ]);

    let mut defs = vec![TableDef {
        name: FACT_TABLE.into(),
        columns: fact_cols.clone(),
        file: None,
    }];
    let mut data = vec![TableData::new(FACT_TABLE, fact_cols, fact_rows)?];
    for name in DIMENSION_TABLES {
        let (_, cols, rows) = tables
            .iter()
            .find(|(n, _, _)| n == name)
            .cloned()
            .expect("every dimension generated");
        defs.push(TableDef {
            name: name.into(),
            columns: cols.clone(),
            file: None,
        });
        data.push(TableData::new(name, cols, rows)?);
    }
    let schema = StarSchema {
        fact: FACT_TABLE.into(),
        tables: defs,
        dimensions: DIMENSION_TABLES
            .iter()
            .map(|t| DimensionRef {
                table: t.to_string(),
                fact_fk: fk_column(t),
                dim_key: "id".into(),
            })
            .collect(),
        hierarchies: vec![
            Hierarchy {
                dimension: "GeographicalArea".into(),
                levels: vec!["city".into(), "region".into(), "country".into()],
            },
            Hierarchy {
                dimension: "Tourist".into(),
                levels: vec!["age_band".into(), "generation".into()],
            },
        ],
        measures: vec!["price".into(), "party_size".into(), "duration_days".into()],
    };
    schema.check()?;
    let truth = GroundTruth {
        seed,
        scale,
        fact_rows: n,
        reviews,
    };
    Ok((StarData::new(schema, data)?, truth))
}

fn write_file(path: &Path, contents: &str) -> Result<(), GenError> {
    fs::write(path, contents).map_err(|source| GenError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `schema.json`, one CSV per table, `presets/*.codq`,
/// `presets/index.json` and `ground_truth.json` under `config.out`.
pub fn generate(config: &GenConfig) -> Result<(StarData, GroundTruth), GenError> {
    let (data, truth) = generate_data(config.seed, config.scale)?;
    let presets_dir = config.out.join("presets");
    fs::create_dir_all(&presets_dir).map_err(|source| GenError::Io {
        path: presets_dir.clone(),
        source,
    })?;
    write_file(&config.out.join("schema.json"), &(data.schema.to_json_pretty() + "\n"))?;
    for def in &data.schema.tables {
        write_csv(&data.tables[&def.name], config.out.join(def.file_name()))?;
    }
    let presets = presets();
    for p in &presets {
        write_file(&presets_dir.join(format!("{}.codq", p.name)), &p.codq)?;
    }
    write_file(
        &presets_dir.join("index.json"),
        &(serde_json::to_string_pretty(&presets).expect("serializable") + "\n"),
    )?;
    write_file(
        &config.out.join("ground_truth.json"),
        &(serde_json::to_string_pretty(&truth).expect("serializable") + "\n"),
    )?;
    Ok((data, truth))
}

/// Reads a `ground_truth.json` written by [`generate`].
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, GenError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| GenError::Io {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}
