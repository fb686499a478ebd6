//! Acceptance suite. Every criterion drives the `clustcube` binary with
//! `--json` and checks its output against an oracle computed here.
//!
//! Prints one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use clustcube_core::star::{write_csv, ColumnDef, DimensionRef, StarSchema, TableData, TableDef};
use clustcube_core::{ColumnType, Value};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value as Json;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

const BIN: &str = env!("CARGO_BIN_EXE_clustcube");

fn clustcube(args: &[&str]) -> Result<Json, String> {
    let out = Command::new(BIN)
        .args(args)
        .arg("--json")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "clustcube {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("clustcube {}: bad JSON: {e}", args.join(" ")))
}

fn clustcube_raw(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(BIN)
        .args(args)
        .arg("--json")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(out.stdout)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn f64s(v: &Json) -> Vec<f64> {
    v.as_array()
        .map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect())
        .unwrap_or_default()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn generate(dir: &Path, seed: u64, scale: &str) -> Result<Json, String> {
    clustcube(&[
        "generate",
        "--seed",
        &seed.to_string(),
        "--scale",
        scale,
        "--out",
        path_str(dir),
    ])
}

/// Writes a star as a data directory the CLI can load.
fn write_star(dir: &Path, schema: &StarSchema, tables: &[TableData]) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("schema.json"), schema.to_json_pretty()).unwrap();
    for t in tables {
        write_csv(t, dir.join(format!("{}.csv", t.name))).unwrap();
    }
}

// ---------------------------------------------------------------- lattice

fn lattice_counts() -> Outcome {
    let four = clustcube(&["lattice", "--dims", "4"])?;
    ensure(four == serde_json::json!({"cuboids": 16}), || {
        format!("--dims 4 printed {four}")
    })?;

    let start = Instant::now();
    let sixteen = clustcube(&["lattice", "--dims", "16", "--list"])?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(sixteen["cuboids"] == 65_536, || {
        format!("--dims 16 gave {}", sixteen["cuboids"])
    })?;
    let names: BTreeSet<&str> = sixteen["names"]
        .as_array()
        .map(|a| a.iter().filter_map(Json::as_str).collect())
        .unwrap_or_default();
    ensure(names.len() == 65_536, || format!("{} distinct names", names.len()))?;
    ensure(elapsed < 2.0, || format!("16 flat dimensions took {elapsed:.2}s"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(722);
    for _ in 0..200 {
        let levels: Vec<u64> = (0..rng.random_range(1..=7)).map(|_| rng.random_range(1..=4)).collect();
        let expected: u64 = levels.iter().map(|l| l + 1).product();
        let arg = levels.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let got = clustcube(&["lattice", "--levels", &arg])?;
        ensure(got["cuboids"] == expected, || {
            format!("levels {arg}: {} != {expected}", got["cuboids"])
        })?;
    }
    Ok(format!(
        "16 and 65536 cuboids (65536 listed in {elapsed:.2}s); 200 mixed hierarchies match the product formula"
    ))
}

// ---------------------------------------------------------------- structure

fn structure_facts(tmp: &Path) -> Outcome {
    let dir = tmp.join("structure");
    let out = generate(&dir, 42, "tiny")?;
    ensure(out["fact"] == "Reservation", || format!("fact table {}", out["fact"]))?;
    let dims: BTreeSet<&str> = out["dimension_tables"]
        .as_array()
        .map(|a| a.iter().filter_map(Json::as_str).collect())
        .unwrap_or_default();
    ensure(dims.len() == 16 && !dims.contains("Reservation"), || {
        format!("{} dimension tables", dims.len())
    })?;
    ensure(out["tables"] == 17, || format!("{} tables", out["tables"]))?;
    let schema: Json = serde_json::from_str(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
    let declared: BTreeSet<&str> = schema["tables"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|t| t["name"].as_str())
        .collect();
    ensure(declared.len() == 17 && declared.contains("Reservation"), || {
        format!("schema declares {declared:?}")
    })?;

    let presets: BTreeMap<String, BTreeSet<String>> = out["presets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let dims = p["dimensions"]
                .as_array()
                .unwrap()
                .iter()
                .map(|d| d.as_str().unwrap().to_string())
                .collect();
            (p["name"].as_str().unwrap().to_string(), dims)
        })
        .collect();
    let names: BTreeSet<&str> = presets.keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = [
        "FlightInformationCube",
        "FerryInformationCube",
        "CarRentalInformationCube",
        "TourInformationCube",
        "TaxiInformationCube",
    ]
    .into();
    ensure(names == expected, || format!("presets {names:?}"))?;
    for (name, dims) in &presets {
        ensure(dims.len() == 6, || format!("{name} has {} dimensions", dims.len()))?;
    }
    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let ferry = set(&[
        "Accommodation",
        "Ferry",
        "GeographicalArea",
        "Tourist",
        "FerryReview",
        "AccommodationReview",
    ]);
    let tour = set(&[
        "Accommodation",
        "CarRental",
        "Tourist",
        "GeographicalArea",
        "CarRentalReview",
        "AccommodationReview",
    ]);
    ensure(presets["FerryInformationCube"] == ferry, || {
        format!("Ferry dims {:?}", presets["FerryInformationCube"])
    })?;
    ensure(presets["TourInformationCube"] == tour, || {
        format!("Tour dims {:?}", presets["TourInformationCube"])
    })?;
    Ok("16 dimension tables + Reservation; 5 named presets x 6 dimensions; Ferry and Tour sets exact".into())
}

// ---------------------------------------------------------------- codq

const COLS: [&str; 4] = ["id", "g", "v", "w"];

struct JoinInstance {
    tables: Vec<TableData>,
    schema: StarSchema,
    /// Table index of each alias; alias 0 is the fact table.
    alias_tables: Vec<usize>,
    /// (column on the joined alias, earlier alias, column on it).
    joins: Vec<(usize, usize, usize)>,
    projections: Vec<(usize, usize)>,
    text: String,
}

fn join_instance(rng: &mut ChaCha8Rng) -> JoinInstance {
    let cols = vec![
        ColumnDef::new("id", ColumnType::Integer),
        ColumnDef::new("g", ColumnType::Integer),
        ColumnDef::new("v", ColumnType::Text),
        ColumnDef::new("w", ColumnType::Integer),
    ];
    let mut tables = Vec::new();
    let mut defs = Vec::new();
    for t in 0..5 {
        let name = if t == 0 { "F".to_string() } else { format!("T{t}") };
        let rows = if t == 0 {
            rng.random_range(0..=1000)
        } else {
            rng.random_range(0..12)
        };
        let data: Vec<Vec<Value>> = (0..rows)
            .map(|i| {
                let g = if rng.random_bool(0.05) {
                    Value::Null
                } else {
                    Value::Integer(rng.random_range(0..8))
                };
                vec![
                    Value::Integer(i as i64),
                    g,
                    Value::text(format!("s{}", rng.random_range(0..5))),
                    Value::Integer(rng.random_range(0..10)),
                ]
            })
            .collect();
        defs.push(TableDef {
            name: name.clone(),
            columns: cols.clone(),
            file: None,
        });
        tables.push(TableData::new(name, cols.clone(), data).unwrap());
    }
    let schema = StarSchema {
        fact: "F".into(),
        tables: defs,
        dimensions: vec![],
        hierarchies: vec![],
        measures: vec![],
    };
    let mut alias_tables = vec![0];
    let mut joins = Vec::new();
    let mut join_text = String::new();
    for j in 1..=rng.random_range(0..=4) {
        let t = rng.random_range(1..5);
        let other = rng.random_range(0..alias_tables.len());
        let own = [0, 3][rng.random_range(0..2)];
        let other_col = [1, 3, 0][rng.random_range(0..3)];
        alias_tables.push(t);
        joins.push((own, other, other_col));
        join_text.push_str(&format!(
            " JOIN T{t} a{j} ON a{other}.{} = a{j}.{}",
            COLS[other_col], COLS[own]
        ));
    }
    let mut projections = Vec::new();
    let mut proj_text = Vec::new();
    for a in 0..alias_tables.len() {
        for (c, col) in COLS.iter().enumerate() {
            if (a == 0 && c == 0) || rng.random_bool(0.4) {
                projections.push((a, c));
                proj_text.push(format!("a{a}.{} AS p{a}_{c}:carry", col));
            }
        }
    }
    let text = format!("SELECT {} FROM F a0{join_text}", proj_text.join(", "));
    JoinInstance {
        tables,
        schema,
        alias_tables,
        joins,
        projections,
        text,
    }
}

/// Inner join by nested loops over every table row.
fn nested_loop(inst: &JoinInstance) -> Vec<String> {
    fn go(inst: &JoinInstance, depth: usize, bound: &mut Vec<usize>, out: &mut Vec<String>) {
        let table = |a: usize| &inst.tables[inst.alias_tables[a]];
        if depth == inst.joins.len() {
            let row: Vec<Json> = inst
                .projections
                .iter()
                .map(|&(a, c)| table(a).rows[bound[a]][c].to_json())
                .collect();
            out.push(serde_json::to_string(&row).unwrap());
            return;
        }
        let (own, other, other_col) = inst.joins[depth];
        let probe = table(other).rows[bound[other]][other_col].clone();
        for r in 0..table(depth + 1).rows.len() {
            let v = &table(depth + 1).rows[r][own];
            if !v.is_null() && !probe.is_null() && *v == probe {
                bound[depth + 1] = r;
                go(inst, depth + 1, bound, out);
            }
        }
    }
    let mut out = Vec::new();
    let mut bound = vec![0; inst.alias_tables.len()];
    for f in 0..inst.tables[0].rows.len() {
        bound[0] = f;
        go(inst, 0, &mut bound, &mut out);
    }
    out
}

fn codq_oracle(tmp: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(724);
    let mut total = 0;
    for i in 0..100 {
        let inst = join_instance(&mut rng);
        let dir = tmp.join(format!("codq{i}"));
        write_star(&dir, &inst.schema, &inst.tables);
        let q = dir.join("query.codq");
        std::fs::write(&q, &inst.text).unwrap();
        let out = clustcube(&["--data-dir", path_str(&dir), "objects", "--codq", path_str(&q), "--all"])?;
        let mut got: Vec<String> = out["objects"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let mut expected = nested_loop(&inst);
        got.sort();
        expected.sort();
        ensure(got == expected, || {
            format!(
                "instance {i}: {} objects vs {} from the oracle: {}",
                got.len(),
                expected.len(),
                inst.text
            )
        })?;
        total += expected.len();
        std::fs::remove_dir_all(&dir).ok();
    }
    Ok(format!("100 random instances, {total} objects, multisets equal"))
}

// ---------------------------------------------------------------- partitions

fn partition_invariants(tmp: &Path) -> Outcome {
    let mut cubes = 0;
    for scale in ["tiny", "small"] {
        for seed in [1u64, 2, 3] {
            let dir = tmp.join(format!("part-{scale}-{seed}"));
            let gen = generate(&dir, seed, scale)?;
            let presets: Vec<String> = gen["presets"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| p["name"].as_str().unwrap().to_string())
                .collect();
            for p in &presets {
                let d = path_str(&dir);
                let s = seed.to_string();
                clustcube(&[
                    "--data-dir",
                    d,
                    "build",
                    "--cuboid",
                    p,
                    "--k",
                    "3",
                    "--seed",
                    &s,
                    "--min-cell-size",
                    "1",
                ])?;
                let doc = clustcube(&["--data-dir", d, "export", "--cuboid", p])?;
                let n = doc["object_count"].as_u64().unwrap() as usize;
                let mut seen = vec![false; n];
                let mut placed = 0usize;
                for cell in doc["cells"].as_array().unwrap() {
                    let objects = cell["objects"].as_array().unwrap();
                    let count = cell["count"].as_u64().unwrap() as usize;
                    ensure(objects.len() == count, || format!("{p}: cell count mismatch"))?;
                    for o in objects {
                        let o = o.as_u64().unwrap() as usize;
                        ensure(o < n && !seen[o], || {
                            format!("{p} {scale}/{seed}: object {o} in two cells")
                        })?;
                        seen[o] = true;
                    }
                    placed += count;
                    let sizes: usize = cell["clustering"]["sizes"]
                        .as_array()
                        .ok_or_else(|| format!("{p}: a cell was not clustered"))?
                        .iter()
                        .map(|v| v.as_u64().unwrap() as usize)
                        .sum();
                    ensure(sizes == count, || {
                        format!("{p}: cluster sizes {sizes} != count {count}")
                    })?;
                }
                for o in doc["unplaced"].as_array().unwrap() {
                    let o = o.as_u64().unwrap() as usize;
                    ensure(o < n && !seen[o], || format!("{p}: unplaced object {o} also in a cell"))?;
                    seen[o] = true;
                }
                let unplaced = doc["unplaced_count"].as_u64().unwrap() as usize;
                ensure(placed + unplaced == n, || format!("{p}: {placed} + {unplaced} != {n}"))?;
                ensure(seen.iter().all(|&b| b), || format!("{p}: an object is missing"))?;
                cubes += 1;
            }
            std::fs::remove_dir_all(&dir).ok();
        }
    }
    Ok(format!(
        "{cubes} cubes: cells disjoint, cells + unplaced = objects, cluster sizes = cell counts"
    ))
}

// ---------------------------------------------------------------- k-means

fn write_points(path: &Path, rows: &[Vec<f64>]) {
    let d = rows[0].len();
    let mut text = (0..d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + "\n";
    for r in rows {
        // `{:?}` prints the shortest representation that reads back exactly.
        text += &(r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n");
    }
    std::fs::write(path, text).unwrap();
}

fn group_sse(rows: &[Vec<f64>], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for &i in members {
        for j in 0..d {
            mean[j] += rows[i][j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= members.len() as f64);
    members
        .iter()
        .map(|&i| rows[i].iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

fn best_two_partition(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let a: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|i| mask >> (i - 1) & 1 == 1))
            .collect();
        let b: Vec<usize> = (1..n).filter(|i| mask >> (i - 1) & 1 == 0).collect();
        if !b.is_empty() {
            best = best.min(group_sse(rows, &a) + group_sse(rows, &b));
        }
    }
    best
}

fn non_increasing(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0])
}

fn kmeans_properties(tmp: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(726);
    let file = tmp.join("points.csv");
    let mut runs = 0;
    for i in 0..50 {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        write_points(&file, &rows);
        let seed = rng.random_range(0..1000u64).to_string();
        let c = clustcube(&[
            "cluster",
            "--input",
            path_str(&file),
            "--k",
            "2",
            "--seed",
            &seed,
            "--tol",
            "0",
        ])?;
        runs += 1;
        ensure(non_increasing(&f64s(&c["sse_history"])), || {
            format!("instance {i}: SSE rose")
        })?;
        let assignment: Vec<usize> = c["assignment"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect();
        let groups: Vec<Vec<usize>> = (0..2)
            .map(|g| (0..n).filter(|&i| assignment[i] == g).collect())
            .collect();
        // Scored with the same routine as the exhaustive search, so the
        // comparison is exact.
        let own = group_sse(&rows, &groups[0]) + group_sse(&rows, &groups[1]);
        let opt = best_two_partition(&rows);
        ensure(own >= opt, || {
            format!("instance {i}: SSE {own} below the optimum {opt}")
        })?;
        let reported = c["sse"].as_f64().unwrap();
        ensure((reported - own).abs() <= 1e-9 * (1.0 + own), || {
            format!("instance {i}: reported SSE {reported} vs {own}")
        })?;
    }

    for i in 0..10 {
        let n = rng.random_range(20..200);
        let d = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        write_points(&file, &rows);
        let k = rng.random_range(2..=6).to_string();
        let c = clustcube(&[
            "cluster",
            "--input",
            path_str(&file),
            "--k",
            &k,
            "--seed",
            &i.to_string(),
            "--tol",
            "0",
        ])?;
        runs += 1;
        ensure(non_increasing(&f64s(&c["sse_history"])), || {
            format!("run {i} with k={k}: SSE rose")
        })?;

        let one = clustcube(&["cluster", "--input", path_str(&file), "--k", "1", "--seed", "0"])?;
        runs += 1;
        ensure(non_increasing(&f64s(&one["sse_history"])), || {
            "k=1: SSE rose".to_string()
        })?;
        let centroid = f64s(&one["centroids"][0]);
        for j in 0..d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            ensure((centroid[j] - mean).abs() <= 1e-9, || {
                format!("k=1 centroid {} vs mean {mean}", centroid[j])
            })?;
        }

        let args = ["cluster", "--input", path_str(&file), "--k", &k, "--seed", "99"];
        let (a, b) = (clustcube_raw(&args)?, clustcube_raw(&args)?);
        ensure(a == b, || "two runs with the same seed differ".to_string())?;
    }
    Ok(format!(
        "{runs} runs non-increasing; 50 exhaustive checks; k=1 mean within 1e-9; same seed, same bytes"
    ))
}

// ---------------------------------------------------------------- regression

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Dense normal equations with an intercept column, solved by LU.
fn dense_fit(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let d = xs[0].len() + 1;
    let x = DMatrix::from_fn(xs.len(), d, |i, j| if j == 0 { 1.0 } else { xs[i][j - 1] });
    let y = DVector::from_column_slice(ys);
    let xt = x.transpose();
    (&xt * &x)
        .lu()
        .solve(&(&xt * y))
        .expect("full rank")
        .iter()
        .copied()
        .collect()
}

fn regression_merge(tmp: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(727);
    let mut worst_merge = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for i in 0..100 {
        let d = rng.random_range(1..=4);
        let parts = rng.random_range(2..=8);
        let n = rng.random_range(40..=300);
        let beta: Vec<f64> = (0..=d)
            .map(|_| rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 })
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut fact_rows = Vec::new();
        for r in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.1..0.1);
            let part = if r < parts { r } else { rng.random_range(0..parts) };
            let mut row = vec![Value::Integer(r as i64), Value::Integer(part as i64)];
            row.extend(x.iter().map(|&v| Value::Real(v)));
            row.push(Value::Real(y));
            fact_rows.push(row);
            xs.push(x);
            ys.push(y);
        }
        let mut fact_cols = vec![
            ColumnDef::new("id", ColumnType::Integer),
            ColumnDef::new("part_id", ColumnType::Integer),
        ];
        fact_cols.extend((0..d).map(|j| ColumnDef::new(format!("x{j}"), ColumnType::Real)));
        fact_cols.push(ColumnDef::new("y", ColumnType::Real));
        let part_cols = vec![
            ColumnDef::new("id", ColumnType::Integer),
            ColumnDef::new("name", ColumnType::Text),
        ];
        let part_rows = (0..parts)
            .map(|p| vec![Value::Integer(p as i64), Value::text(format!("p{p}"))])
            .collect();
        let tables = vec![
            TableData::new("F", fact_cols.clone(), fact_rows).unwrap(),
            TableData::new("Part", part_cols.clone(), part_rows).unwrap(),
        ];
        let schema = StarSchema {
            fact: "F".into(),
            tables: vec![
                TableDef {
                    name: "F".into(),
                    columns: fact_cols,
                    file: None,
                },
                TableDef {
                    name: "Part".into(),
                    columns: part_cols,
                    file: None,
                },
            ],
            dimensions: vec![DimensionRef {
                table: "Part".into(),
                fact_fk: "part_id".into(),
                dim_key: "id".into(),
            }],
            hierarchies: vec![],
            measures: vec![],
        };
        let dir = tmp.join(format!("reg{i}"));
        write_star(&dir, &schema, &tables);
        let features: Vec<String> = (0..d).map(|j| format!("r.x{j} AS x{j}:feature")).collect();
        let codq = format!(
            "SELECT p.name AS Part:coordinate, {}, r.y AS y:target FROM F r JOIN Part p ON r.part_id = p.id",
            features.join(", ")
        );
        let q = dir.join("q.codq");
        std::fs::write(&q, codq).unwrap();
        let dd = path_str(&dir);
        let common = ["--k", "1", "--min-cell-size", "1"];
        let mut args = vec![
            "--data-dir",
            dd,
            "build",
            "--cuboid",
            "Parts",
            "--codq",
            path_str(&q),
            "--at",
            "Part=name",
        ];
        args.extend(common);
        clustcube(&args)?;
        let mut args = vec![
            "--data-dir",
            dd,
            "rollup",
            "--cuboid",
            "Parts",
            "--at",
            "Part=name",
            "--dim",
            "Part",
            "--mode",
            "merge_stats",
        ];
        args.extend(common);
        let merged = clustcube(&args)?;
        let mut args = vec!["--data-dir", dd, "regress", "--cuboid", "Parts", "--at", "ALL"];
        args.extend(common);
        let pooled = clustcube(&args)?;

        let merged_beta = f64s(&merged["cells"][0]["regression"]["beta"]);
        let pooled_beta = f64s(&pooled["cells"][0]["regression"]["beta"]);
        let oracle = dense_fit(&xs, &ys);
        ensure(merged_beta.len() == d + 1 && pooled_beta.len() == d + 1, || {
            format!("dataset {i}: missing fit")
        })?;
        ensure(merged["cells"][0]["regression"]["n"] == n, || {
            format!("dataset {i}: merged n")
        })?;
        for j in 0..=d {
            let (m, p, o) = (merged_beta[j], pooled_beta[j], oracle[j]);
            worst_merge = worst_merge.max((m - p).abs() / m.abs().max(p.abs()));
            worst_oracle = worst_oracle.max((p - o).abs() / p.abs().max(o.abs()));
            ensure(rel_close(m, p, 1e-9), || {
                format!("dataset {i} beta[{j}]: merged {m} vs pooled {p}")
            })?;
            ensure(rel_close(p, o, 1e-9), || {
                format!("dataset {i} beta[{j}]: engine {p} vs oracle {o}")
            })?;
        }
        std::fs::remove_dir_all(&dir).ok();
    }
    Ok(format!(
        "100 datasets in 2-8 parts; max relative gap merged/pooled {worst_merge:.1e}, engine/oracle {worst_oracle:.1e}"
    ))
}

// ---------------------------------------------------------------- roll-up

/// Objects of every cell keyed by the cell key.
fn cell_objects(doc: &Json) -> BTreeMap<String, BTreeSet<u64>> {
    doc["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let objects = c["objects"]
                .as_array()
                .unwrap()
                .iter()
                .map(|o| o.as_u64().unwrap())
                .collect();
            (c["key"].to_string(), objects)
        })
        .collect()
}

fn rollup_consistency(tmp: &Path) -> Outcome {
    let dir = tmp.join("rollup");
    generate(&dir, 42, "tiny")?;
    let d = path_str(&dir);
    let index: Json =
        serde_json::from_str(&std::fs::read_to_string(dir.join("presets").join("index.json")).unwrap()).unwrap();
    let mut steps = 0;
    let mut compared = 0;
    let mut worst = 0.0f64;
    for preset in [
        "FlightInformationCube",
        "FerryInformationCube",
        "CarRentalInformationCube",
        "TourInformationCube",
        "TaxiInformationCube",
    ] {
        let lattice = clustcube(&["--data-dir", d, "lattice", "--cuboid", preset, "--list"])?;
        let names: Vec<String> = lattice["names"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n.as_str().unwrap().to_string())
            .collect();
        // Walk every dimension up one level at a time, from the base and from
        // the preset default where cells are dense enough to fit.
        let default_at = index.as_array().unwrap().iter().find(|p| p["name"] == preset).unwrap()["default_cuboid"]
            .as_str()
            .unwrap()
            .to_string();
        for start in [names[0].clone(), default_at] {
            let dims: Vec<String> = start
                .split(',')
                .map(|p| p.split('=').next().unwrap().to_string())
                .collect();
            for dim in &dims {
                let mut at = start.clone();
                loop {
                    let opts = ["--k", "2", "--seed", "5", "--min-cell-size", "1"];
                    let mut args = vec!["--data-dir", d, "build", "--cuboid", preset, "--at", &at];
                    args.extend(opts);
                    clustcube(&args)?;
                    let child = clustcube(&["--data-dir", d, "export", "--cuboid", preset])?;
                    let mut args = vec![
                        "--data-dir",
                        d,
                        "rollup",
                        "--cuboid",
                        preset,
                        "--at",
                        &at,
                        "--dim",
                        dim,
                        "--mode",
                        "recluster",
                    ];
                    args.extend(opts);
                    let recluster = clustcube(&args)?;
                    let parent_at = recluster["cuboid"].as_str().unwrap().to_string();
                    let mut args = vec![
                        "--data-dir",
                        d,
                        "rollup",
                        "--cuboid",
                        preset,
                        "--at",
                        &at,
                        "--dim",
                        dim,
                        "--mode",
                        "merge_stats",
                    ];
                    args.extend(opts);
                    let merged = clustcube(&args)?;
                    let mut args = vec!["--data-dir", d, "build", "--cuboid", preset, "--at", &parent_at];
                    args.extend(opts);
                    clustcube(&args)?;
                    let direct = clustcube(&["--data-dir", d, "export", "--cuboid", preset])?;
                    steps += 1;

                    // Count additivity: every parent cell is a union of child cells.
                    let children = cell_objects(&child);
                    for (key, objects) in cell_objects(&merged) {
                        let covered: BTreeSet<u64> = children
                            .values()
                            .filter(|c| !c.is_disjoint(&objects))
                            .flat_map(|c| c.iter().copied())
                            .collect();
                        let child_unplaced: BTreeSet<u64> = child["unplaced"]
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|o| o.as_u64().unwrap())
                            .collect();
                        let expected: BTreeSet<u64> = covered.union(&(&objects & &child_unplaced)).copied().collect();
                        ensure(expected == objects, || {
                            format!("{preset} {at} -> {dim}: cell {key} is not a union of children")
                        })?;
                    }
                    let total = |doc: &Json| {
                        doc["cells"]
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|c| c["count"].as_u64().unwrap())
                            .sum::<u64>()
                            + doc["unplaced_count"].as_u64().unwrap()
                    };
                    ensure(total(&merged) == total(&child), || {
                        format!("{preset} {at} -> {dim}: counts differ")
                    })?;
                    ensure(total(&recluster) == total(&child), || {
                        format!("{preset} {at} -> {dim}: counts differ")
                    })?;

                    // Recluster roll-up is the direct build at the parent.
                    for field in ["cuboid", "cells", "unplaced"] {
                        ensure(recluster[field] == direct[field], || {
                            format!("{preset} {at} -> {dim}: {field} differs from direct build")
                        })?;
                    }

                    // Merged regressions equal the pooled ones.
                    let pooled: BTreeMap<String, &Json> = direct["cells"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|c| (c["key"].to_string(), c))
                        .collect();
                    for c in merged["cells"].as_array().unwrap() {
                        let p = pooled[&c["key"].to_string()];
                        match (c["regression"].is_object(), p["regression"].is_object()) {
                            (true, true) => {
                                let (m, q) = (f64s(&c["regression"]["beta"]), f64s(&p["regression"]["beta"]));
                                for (a, b) in m.iter().zip(&q) {
                                    worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
                                    ensure(rel_close(*a, *b, 1e-9), || {
                                        format!("{preset} {at} -> {dim} cell {}: {a} vs {b}", c["key"])
                                    })?;
                                }
                                compared += 1;
                            }
                            (false, false) => {}
                            _ => {
                                return Err(format!(
                                    "{preset} {at} -> {dim} cell {}: fit present on one side only",
                                    c["key"]
                                ))
                            }
                        }
                    }

                    if parent_at == at || !parent_at.contains(&format!("{dim}=")) {
                        break;
                    }
                    at = parent_at;
                }
            }
        }
    }
    ensure(compared > 0, || "no cell had a regression fit to compare".to_string())?;
    Ok(format!("{steps} roll-up steps; recluster equals direct build; {compared} merged fits within 1e-9 (max gap {worst:.1e})"))
}

// ---------------------------------------------------------------- planted truth

fn planted_recovery(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let dir = tmp.join("planted");
    generate(&dir, 42, "small")?;
    let d = path_str(&dir);
    let truth: Json = serde_json::from_str(&std::fs::read_to_string(dir.join("ground_truth.json")).unwrap()).unwrap();
    let index: Json =
        serde_json::from_str(&std::fs::read_to_string(dir.join("presets").join("index.json")).unwrap()).unwrap();
    let mut worst = 0.0f64;
    for p in index.as_array().unwrap() {
        let name = p["name"].as_str().unwrap();
        let model = &truth["reviews"][p["target_table"].as_str().unwrap()];
        let sigma = model["noise_sd"].as_f64().unwrap().to_string();
        let out = clustcube(&[
            "--data-dir",
            d,
            "regress",
            "--cuboid",
            name,
            "--at",
            "ALL",
            "--k",
            "1",
            "--sigma",
            &sigma,
        ])?;
        let cell = &out["cells"][0];
        let beta = f64s(&cell["regression"]["beta"]);
        let se = f64s(&cell["std_errors"]);
        for (j, predictor) in out["predictor_names"].as_array().unwrap().iter().enumerate() {
            let predictor = predictor.as_str().unwrap();
            let planted = model[predictor]
                .as_f64()
                .ok_or_else(|| format!("{name}: no planted value for {predictor}"))?;
            let z = (beta[j] - planted) / se[j];
            worst = worst.max(z.abs());
            ensure(z.abs() <= 3.0, || {
                format!("{name} {predictor}: beta {} planted {planted} z {z:.2}", beta[j])
            })?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, || format!("sweep took {elapsed:.1}s"))?;
    Ok(format!(
        "5 presets at small scale, max |z| = {worst:.2}, sweep {elapsed:.1}s"
    ))
}

// ---------------------------------------------------------------- determinism

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn generator_determinism(tmp: &Path) -> Outcome {
    let (a, b) = (tmp.join("gen-a"), tmp.join("gen-b"));
    generate(&a, 42, "tiny")?;
    generate(&b, 42, "tiny")?;
    let (fa, fb) = (files(&a), files(&b));
    ensure(fa.keys().eq(fb.keys()), || "different file sets".to_string())?;
    for (path, bytes) in &fa {
        ensure(fb[path] == *bytes, || format!("{} differs", path.display()))?;
    }
    Ok(format!("{} files byte-identical", fa.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let t = tmp.path();
    let criteria: Vec<(&str, Check)> = vec![
        ("lattice counts", Box::new(lattice_counts)),
        ("structure facts", Box::new(|| structure_facts(t))),
        ("CODQ oracle equivalence", Box::new(|| codq_oracle(t))),
        ("partition invariants", Box::new(|| partition_invariants(t))),
        ("k-means properties", Box::new(|| kmeans_properties(t))),
        ("regression merge-fit equivalence", Box::new(|| regression_merge(t))),
        ("roll-up consistency", Box::new(|| rollup_consistency(t))),
        ("planted ground-truth recovery", Box::new(|| planted_recovery(t))),
        ("generator determinism", Box::new(|| generator_determinism(t))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
