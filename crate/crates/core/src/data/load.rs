//! TSV ingestion and emission.
//!
//! All files are UTF-8 TSV with a header row, a trailing newline, `.` as the
//! decimal separator, and no thousands separators. Entity ids in files are
//! arbitrary u64; the loader remaps them to dense 0-based indices and records
//! the mapping in sidecar id-map files.

use crate::data::types::{
    CatalogItem, Dataset, FeedbackKind, GroupDef, Interaction, InteractionSet, UserProfile,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tag};
use rand::seq::SliceRandom;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// How to obtain a train/test split from unsplit interaction files.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    /// Entries with `timestamp < cutoff` train; the rest test.
    Timestamp { cutoff: i64 },
    /// Random split of group-item entries by fraction; user-item entries all
    /// stay in the training window.
    Fraction { test_fraction: f64, seed: u64 },
}

/// How a derived explicit group rating averages member ratings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatingRule {
    /// Average over members who rated the item.
    RatersOnly,
    /// Sum of member ratings divided by group size.
    AllMembers,
}

#[derive(Clone, Debug)]
pub struct LoadConfig {
    pub feedback: FeedbackKind,
    /// Present when the `*_train` paths hold unsplit data.
    pub split: Option<SplitSpec>,
    /// Distinct-buyer gate used when group interactions must be derived.
    pub min_buyers: u32,
    /// Averaging rule for derived explicit group ratings.
    pub rating_rule: RatingRule,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig {
            feedback: FeedbackKind::Implicit,
            split: None,
            min_buyers: 2,
            rating_rule: RatingRule::RatersOnly,
        }
    }
}

/// Input file locations. Test paths are optional; a missing group-item train
/// path asks the loader to derive group interactions from user-item ones.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub items: PathBuf,
    pub groups: PathBuf,
    pub user_item_train: PathBuf,
    pub user_item_test: Option<PathBuf>,
    pub group_item_train: Option<PathBuf>,
    pub group_item_test: Option<PathBuf>,
}

/// Dense index -> original id, per entity kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMaps {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
    pub groups: Vec<u64>,
}

impl IdMaps {
    /// Identity maps for data born dense (the synthetic generator).
    pub fn identity(n_users: u32, n_items: u32, n_groups: u32) -> Self {
        IdMaps {
            users: (0..n_users as u64).collect(),
            items: (0..n_items as u64).collect(),
            groups: (0..n_groups as u64).collect(),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Read a TSV file and check its header, returning (1-based line, fields).
fn read_rows(path: &Path, headers: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected a header row"))?;
    let want: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    let got: Vec<String> = header.split('\t').map(|s| s.to_string()).collect();
    if got != want {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, got {:?}", want.join("\t"), header),
        ));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<String> = line.split('\t').map(|s| s.to_string()).collect();
        if fields.len() != headers.len() {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", headers.len(), fields.len()),
            ));
        }
        rows.push((idx + 1, fields));
    }
    Ok(rows)
}

fn parse_u64(path: &Path, line: usize, what: &str, s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| parse_err(path, line, format!("{what} {s:?} is not a nonnegative integer")))
}

fn parse_f64(path: &Path, line: usize, what: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("{what} {s:?} is not a number")))
}

/// Raw interaction row before id remapping.
struct RawInteraction {
    row_orig: u64,
    item_orig: u64,
    value: f64,
    timestamp: Option<i64>,
}

/// Interactions support an optional trailing timestamp column; the header
/// decides, and then every row must conform.
fn read_interactions(path: &Path, row_name: &str) -> Result<Vec<RawInteraction>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let header = text
        .lines()
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected a header row"))?;
    let with_ts = header == format!("{row_name}\titem_id\tvalue\ttimestamp");
    let headers: Vec<&str> = if with_ts {
        vec![row_name, "item_id", "value", "timestamp"]
    } else {
        vec![row_name, "item_id", "value"]
    };
    let rows = read_rows(path, &headers)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let row_orig = parse_u64(path, line, row_name, &fields[0])?;
        let item_orig = parse_u64(path, line, "item_id", &fields[1])?;
        let value = parse_f64(path, line, "value", &fields[2])?;
        let timestamp = if with_ts {
            Some(
                fields[3]
                    .parse::<i64>()
                    .map_err(|_| parse_err(path, line, format!("timestamp {:?} is not an integer", fields[3])))?,
            )
        } else {
            None
        };
        out.push(RawInteraction {
            row_orig,
            item_orig,
            value,
            timestamp,
        });
    }
    Ok(out)
}

/// Load a dataset from explicit file paths.
pub fn load_dataset(paths: &DatasetPaths, config: &LoadConfig) -> Result<(Dataset, IdMaps)> {
    // Items: original id -> price.
    let item_rows = read_rows(&paths.items, &["item_id", "price"])?;
    let mut item_prices: BTreeMap<u64, f64> = BTreeMap::new();
    for (line, fields) in &item_rows {
        let id = parse_u64(&paths.items, *line, "item_id", &fields[0])?;
        let price = parse_f64(&paths.items, *line, "price", &fields[1])?;
        if !price.is_finite() || price <= 0.0 {
            return Err(parse_err(
                &paths.items,
                *line,
                format!("price {price} must be positive"),
            ));
        }
        if item_prices.insert(id, price).is_some() {
            return Err(parse_err(&paths.items, *line, format!("duplicate item id {id}")));
        }
    }
    if item_prices.is_empty() {
        return Err(parse_err(&paths.items, 1, "no items"));
    }

    // Group memberships: original group id -> original member ids.
    let group_rows = read_rows(&paths.groups, &["group_id", "user_id"])?;
    let mut memberships: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (line, fields) in &group_rows {
        let g = parse_u64(&paths.groups, *line, "group_id", &fields[0])?;
        let u = parse_u64(&paths.groups, *line, "user_id", &fields[1])?;
        let members = memberships.entry(g).or_default();
        if members.contains(&u) {
            return Err(parse_err(
                &paths.groups,
                *line,
                format!("duplicate membership of user {u} in group {g}"),
            ));
        }
        members.push(u);
    }
    if memberships.is_empty() {
        return Err(parse_err(&paths.groups, 1, "no groups"));
    }

    let mut user_raw = read_interactions(&paths.user_item_train, "user_id")?;
    let mut user_raw_test = match &paths.user_item_test {
        Some(p) => read_interactions(p, "user_id")?,
        None => Vec::new(),
    };
    let mut group_raw = match &paths.group_item_train {
        Some(p) => Some(read_interactions(p, "group_id")?),
        None => None,
    };
    let mut group_raw_test = match &paths.group_item_test {
        Some(p) => Some(read_interactions(p, "group_id")?),
        None => None,
    };

    // Split unsplit inputs before any remapping.
    match config.split {
        None => {}
        Some(SplitSpec::Timestamp { cutoff }) => {
            let split_ts = |all: Vec<RawInteraction>,
                            what: &str|
             -> Result<(Vec<RawInteraction>, Vec<RawInteraction>)> {
                let mut train = Vec::new();
                let mut test = Vec::new();
                for e in all {
                    match e.timestamp {
                        Some(ts) if ts < cutoff => train.push(e),
                        Some(_) => test.push(e),
                        None => {
                            return Err(Error::invalid(
                                format!("{what} interaction ({}, {})", e.row_orig, e.item_orig),
                                "timestamp split requested but entry has no timestamp",
                            ))
                        }
                    }
                }
                Ok((train, test))
            };
            let (tr, te) = split_ts(user_raw, "user")?;
            user_raw = tr;
            user_raw_test.extend(te);
            if let Some(gr) = group_raw.take() {
                let (tr, te) = split_ts(gr, "group")?;
                group_raw = Some(tr);
                group_raw_test.get_or_insert_with(Vec::new).extend(te);
            }
        }
        Some(SplitSpec::Fraction { test_fraction, seed }) => {
            if !(0.0..1.0).contains(&test_fraction) {
                return Err(Error::invalid(
                    "test_fraction",
                    format!("{test_fraction} outside [0, 1)"),
                ));
            }
            if let Some(mut gr) = group_raw.take() {
                let mut rng = stream_rng(seed, &[tag("load.split")]);
                gr.shuffle(&mut rng);
                let n_test = (gr.len() as f64 * test_fraction).floor() as usize;
                let test = gr.split_off(gr.len() - n_test);
                group_raw = Some(gr);
                group_raw_test.get_or_insert_with(Vec::new).extend(test);
            }
        }
    }

    // Dense id spaces: items from the catalog, groups from the membership
    // file, users from memberships plus any interaction row.
    let item_ids: Vec<u64> = item_prices.keys().cloned().collect();
    let item_index: BTreeMap<u64, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();
    let group_ids: Vec<u64> = memberships.keys().cloned().collect();
    let group_index: BTreeMap<u64, u32> = group_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();
    let mut user_set: std::collections::BTreeSet<u64> = memberships
        .values()
        .flat_map(|ms| ms.iter().cloned())
        .collect();
    for e in user_raw.iter().chain(user_raw_test.iter()) {
        user_set.insert(e.row_orig);
    }
    let user_ids: Vec<u64> = user_set.into_iter().collect();
    let user_index: BTreeMap<u64, u32> = user_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();

    let map_user_entries = |raw: &[RawInteraction]| -> Result<InteractionSet> {
        let mut entries = Vec::with_capacity(raw.len());
        for e in raw {
            let row = user_index[&e.row_orig];
            let col = *item_index.get(&e.item_orig).ok_or(Error::DanglingId {
                kind: "item",
                id: e.item_orig,
            })?;
            entries.push(Interaction {
                row,
                col,
                value: e.value,
                timestamp: e.timestamp,
            });
        }
        InteractionSet::new(entries)
    };
    let map_group_entries = |raw: &[RawInteraction]| -> Result<InteractionSet> {
        let mut entries = Vec::with_capacity(raw.len());
        for e in raw {
            let row = *group_index.get(&e.row_orig).ok_or(Error::DanglingId {
                kind: "group",
                id: e.row_orig,
            })?;
            let col = *item_index.get(&e.item_orig).ok_or(Error::DanglingId {
                kind: "item",
                id: e.item_orig,
            })?;
            entries.push(Interaction {
                row,
                col,
                value: e.value,
                timestamp: e.timestamp,
            });
        }
        InteractionSet::new(entries)
    };

    let user_item = map_user_entries(&user_raw)?;
    let user_item_test = map_user_entries(&user_raw_test)?;

    let groups: Vec<GroupDef> = group_ids
        .iter()
        .enumerate()
        .map(|(idx, gid)| {
            let mut members: Vec<u32> = memberships[gid].iter().map(|u| user_index[u]).collect();
            members.sort_unstable();
            GroupDef {
                group_id: idx as u32,
                members,
            }
        })
        .collect();

    let group_item = match &group_raw {
        Some(raw) => map_group_entries(raw)?,
        None => derive_groups(&user_item, &groups, config)?,
    };
    let group_item_test = match &group_raw_test {
        Some(raw) => map_group_entries(raw)?,
        None if paths.group_item_train.is_none() && !user_item_test.is_empty() => {
            derive_groups(&user_item_test, &groups, config)?
        }
        None => InteractionSet::empty(),
    };

    let mut ds = Dataset {
        users: user_ids
            .iter()
            .enumerate()
            .map(|(i, _)| UserProfile {
                user_id: i as u32,
                purchase_count: 0,
                freq: 0.0,
            })
            .collect(),
        items: item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| CatalogItem {
                item_id: i as u32,
                raw_price: item_prices[id],
                alpha: 1.0,
            })
            .collect(),
        groups,
        user_item,
        group_item,
        user_item_test,
        group_item_test,
        feedback: config.feedback,
    };
    ds.recompute_profiles()?;
    ds.validate()?;
    Ok((
        ds,
        IdMaps {
            users: user_ids,
            items: item_ids,
            groups: group_ids,
        },
    ))
}

/// Derive group interactions from user ones, honoring the feedback kind: a
/// distinct-buyer gate for implicit data, the configured averaging rule for
/// explicit ratings.
fn derive_groups(
    user_item: &InteractionSet,
    groups: &[GroupDef],
    config: &LoadConfig,
) -> Result<InteractionSet> {
    if config.min_buyers == 0 {
        return Err(Error::invalid("min_buyers", "must be at least 1"));
    }
    let mut entries = Vec::new();
    for g in groups {
        let mut per_item: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for &u in &g.members {
            for e in user_item.row_entries(u) {
                per_item.entry(e.col).or_default().push(e.value);
            }
        }
        for (item, values) in per_item {
            if values.len() < config.min_buyers as usize {
                continue;
            }
            let value = match config.feedback {
                FeedbackKind::Implicit => 1.0,
                FeedbackKind::Explicit => {
                    let sum: f64 = values.iter().sum();
                    match config.rating_rule {
                        RatingRule::RatersOnly => sum / values.len() as f64,
                        RatingRule::AllMembers => sum / g.members.len() as f64,
                    }
                }
            };
            entries.push(Interaction {
                row: g.group_id,
                col: item,
                value,
                timestamp: None,
            });
        }
    }
    InteractionSet::new(entries)
}

/// Load the standard directory layout written by [`write_dataset`].
pub fn load_dataset_dir(dir: &Path) -> Result<(Dataset, IdMaps)> {
    let meta_path = dir.join("meta.tsv");
    let meta_rows = read_rows(&meta_path, &["key", "value"])?;
    let mut feedback = None;
    for (line, fields) in &meta_rows {
        if fields[0] == "feedback" {
            feedback = Some(
                FeedbackKind::parse(&fields[1])
                    .map_err(|_| parse_err(&meta_path, *line, format!("bad feedback {:?}", fields[1])))?,
            );
        }
    }
    let feedback = feedback
        .ok_or_else(|| parse_err(&meta_path, 1, "missing feedback key"))?;

    let opt = |name: &str| -> Option<PathBuf> {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    let paths = DatasetPaths {
        items: dir.join("items.tsv"),
        groups: dir.join("groups.tsv"),
        user_item_train: dir.join("user_item_train.tsv"),
        user_item_test: opt("user_item_test.tsv"),
        group_item_train: opt("group_item_train.tsv"),
        group_item_test: opt("group_item_test.tsv"),
    };
    let config = LoadConfig {
        feedback,
        ..LoadConfig::default()
    };
    load_dataset(&paths, &config)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| io_err(path, e))
}

fn interactions_tsv(set: &InteractionSet, row_name: &str, ids: &[u64], item_ids: &[u64]) -> String {
    let with_ts = !set.is_empty() && set.iter().all(|e| e.timestamp.is_some());
    let mut out = String::new();
    if with_ts {
        out.push_str(&format!("{row_name}\titem_id\tvalue\ttimestamp\n"));
    } else {
        out.push_str(&format!("{row_name}\titem_id\tvalue\n"));
    }
    for e in set.iter() {
        let row = ids[e.row as usize];
        let item = item_ids[e.col as usize];
        if with_ts {
            out.push_str(&format!(
                "{row}\t{item}\t{}\t{}\n",
                e.value,
                e.timestamp.unwrap()
            ));
        } else {
            out.push_str(&format!("{row}\t{item}\t{}\n", e.value));
        }
    }
    out
}

/// Write the standard directory layout: entity tables, the four interaction
/// windows, id maps, and `meta.tsv`. Output is byte-deterministic.
pub fn write_dataset(dir: &Path, ds: &Dataset, ids: &IdMaps) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut items = String::from("item_id\tprice\n");
    for it in &ds.items {
        items.push_str(&format!("{}\t{}\n", ids.items[it.item_id as usize], it.raw_price));
    }
    write_file(&dir.join("items.tsv"), &items)?;

    let mut groups = String::from("group_id\tuser_id\n");
    for g in &ds.groups {
        for &u in &g.members {
            groups.push_str(&format!(
                "{}\t{}\n",
                ids.groups[g.group_id as usize], ids.users[u as usize]
            ));
        }
    }
    write_file(&dir.join("groups.tsv"), &groups)?;

    write_file(
        &dir.join("user_item_train.tsv"),
        &interactions_tsv(&ds.user_item, "user_id", &ids.users, &ids.items),
    )?;
    write_file(
        &dir.join("user_item_test.tsv"),
        &interactions_tsv(&ds.user_item_test, "user_id", &ids.users, &ids.items),
    )?;
    write_file(
        &dir.join("group_item_train.tsv"),
        &interactions_tsv(&ds.group_item, "group_id", &ids.groups, &ids.items),
    )?;
    write_file(
        &dir.join("group_item_test.tsv"),
        &interactions_tsv(&ds.group_item_test, "group_id", &ids.groups, &ids.items),
    )?;

    let meta = format!("key\tvalue\nfeedback\t{}\n", ds.feedback.as_str());
    write_file(&dir.join("meta.tsv"), &meta)?;

    let idmap = |name: &str, ids: &[u64]| -> (PathBuf, String) {
        let mut out = String::from("original_id\tdense_index\n");
        for (dense, orig) in ids.iter().enumerate() {
            out.push_str(&format!("{orig}\t{dense}\n"));
        }
        (dir.join(name), out)
    };
    for (path, content) in [
        idmap("idmap_users.tsv", &ids.users),
        idmap("idmap_items.tsv", &ids.items),
        idmap("idmap_groups.tsv", &ids.groups),
    ] {
        write_file(&path, &content)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &str) {
        std::fs::write(dir.join(name), content).unwrap();
    }

    fn toy_files(dir: &Path) {
        write(dir, "items.tsv", "item_id\tprice\n100\t10.5\n200\t99.0\n");
        write(
            dir,
            "groups.tsv",
            "group_id\tuser_id\n7\t1\n7\t2\n7\t3\n",
        );
        write(
            dir,
            "user_item_train.tsv",
            "user_id\titem_id\tvalue\n1\t100\t1\n1\t200\t1\n2\t100\t1\n",
        );
        write(dir, "group_item_train.tsv", "group_id\titem_id\tvalue\n7\t100\t1\n");
        write(dir, "meta.tsv", "key\tvalue\nfeedback\timplicit\n");
    }

    #[test]
    fn loads_and_remaps_toy_files() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        let (ds, ids) = load_dataset_dir(tmp.path()).unwrap();
        assert_eq!(ds.n_users(), 3);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.n_groups(), 1);
        assert_eq!(ids.users, vec![1, 2, 3]);
        assert_eq!(ids.items, vec![100, 200]);
        assert_eq!(ids.groups, vec![7]);
        assert_eq!(ds.groups[0].members, vec![0, 1, 2]);
        assert_eq!(ds.users[0].purchase_count, 2);
        assert_eq!(ds.users[2].purchase_count, 0);
        assert_eq!(ds.items[0].alpha, 1.0);
        assert_eq!(ds.items[1].alpha, 0.01);
        assert!(ds.group_item.contains(0, 0));
    }

    #[test]
    fn round_trip_preserves_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        let (ds, ids) = load_dataset_dir(tmp.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(out.path(), &ds, &ids).unwrap();
        let (ds2, ids2) = load_dataset_dir(out.path()).unwrap();
        assert_eq!(ds, ds2);
        assert_eq!(ids, ids2);
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(tmp.path(), "items.tsv", "item_id\tprice\n100\t10.5\n200\n");
        let err = load_dataset_dir(tmp.path()).unwrap_err();
        match err {
            Error::Parse { file, line, .. } => {
                assert!(file.ends_with("items.tsv"));
                assert_eq!(line, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_id_is_a_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "user_item_train.tsv",
            "user_id\titem_id\tvalue\nalice\t100\t1\n",
        );
        assert!(matches!(
            load_dataset_dir(tmp.path()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn negative_price_is_a_parse_error() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(tmp.path(), "items.tsv", "item_id\tprice\n100\t-4.0\n");
        assert!(matches!(
            load_dataset_dir(tmp.path()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn unknown_item_id_dangles() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "user_item_train.tsv",
            "user_id\titem_id\tvalue\n1\t999\t1\n",
        );
        assert!(matches!(
            load_dataset_dir(tmp.path()).unwrap_err(),
            Error::DanglingId { kind: "item", id: 999 }
        ));
    }

    #[test]
    fn unknown_group_id_dangles() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "group_item_train.tsv",
            "group_id\titem_id\tvalue\n8\t100\t1\n",
        );
        assert!(matches!(
            load_dataset_dir(tmp.path()).unwrap_err(),
            Error::DanglingId { kind: "group", id: 8 }
        ));
    }

    #[test]
    fn derives_group_interactions_when_file_absent() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        std::fs::remove_file(tmp.path().join("group_item_train.tsv")).unwrap();
        let (ds, _) = load_dataset_dir(tmp.path()).unwrap();
        // Item 100 has two distinct buyers in the group; item 200 only one.
        assert_eq!(
            ds.group_item.iter().map(|e| (e.row, e.col)).collect::<Vec<_>>(),
            vec![(0, 0)]
        );
    }

    #[test]
    fn timestamp_split_partitions_windows() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "user_item_train.tsv",
            "user_id\titem_id\tvalue\ttimestamp\n1\t100\t1\t10\n1\t200\t1\t20\n2\t100\t1\t5\n",
        );
        std::fs::remove_file(tmp.path().join("group_item_train.tsv")).unwrap();
        let paths = DatasetPaths {
            items: tmp.path().join("items.tsv"),
            groups: tmp.path().join("groups.tsv"),
            user_item_train: tmp.path().join("user_item_train.tsv"),
            user_item_test: None,
            group_item_train: None,
            group_item_test: None,
        };
        let config = LoadConfig {
            split: Some(SplitSpec::Timestamp { cutoff: 15 }),
            min_buyers: 1,
            ..LoadConfig::default()
        };
        let (ds, _) = load_dataset(&paths, &config).unwrap();
        assert_eq!(ds.user_item.len(), 2);
        assert_eq!(ds.user_item_test.len(), 1);
        assert!(ds.user_item_test.contains(0, 1));
        // Derived group windows follow the user-item windows.
        assert!(ds.group_item.contains(0, 0));
        assert!(ds.group_item_test.contains(0, 1));
    }

    #[test]
    fn fraction_split_moves_group_entries() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "group_item_train.tsv",
            "group_id\titem_id\tvalue\n7\t100\t1\n7\t200\t1\n",
        );
        let paths = DatasetPaths {
            items: tmp.path().join("items.tsv"),
            groups: tmp.path().join("groups.tsv"),
            user_item_train: tmp.path().join("user_item_train.tsv"),
            user_item_test: None,
            group_item_train: Some(tmp.path().join("group_item_train.tsv")),
            group_item_test: None,
        };
        let config = LoadConfig {
            split: Some(SplitSpec::Fraction {
                test_fraction: 0.5,
                seed: 1,
            }),
            ..LoadConfig::default()
        };
        let (ds, _) = load_dataset(&paths, &config).unwrap();
        assert_eq!(ds.group_item.len(), 1);
        assert_eq!(ds.group_item_test.len(), 1);
    }

    #[test]
    fn explicit_derivation_averages_raters() {
        let tmp = tempfile::tempdir().unwrap();
        toy_files(tmp.path());
        write(
            tmp.path(),
            "user_item_train.tsv",
            "user_id\titem_id\tvalue\n1\t100\t4\n2\t100\t2\n3\t200\t5\n",
        );
        std::fs::remove_file(tmp.path().join("group_item_train.tsv")).unwrap();
        let paths = DatasetPaths {
            items: tmp.path().join("items.tsv"),
            groups: tmp.path().join("groups.tsv"),
            user_item_train: tmp.path().join("user_item_train.tsv"),
            user_item_test: None,
            group_item_train: None,
            group_item_test: None,
        };
        let mut config = LoadConfig {
            feedback: FeedbackKind::Explicit,
            min_buyers: 2,
            ..LoadConfig::default()
        };
        let (ds, _) = load_dataset(&paths, &config).unwrap();
        assert_eq!(ds.group_item.get(0, 0), Some(3.0));

        config.rating_rule = RatingRule::AllMembers;
        let (ds2, _) = load_dataset(&paths, &config).unwrap();
        assert_eq!(ds2.group_item.get(0, 0), Some(2.0));
    }
}
