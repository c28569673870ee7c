//! File formats: JSON-lines prompts and rewards, the pool document,
//! predictor JSON and CSV exports.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use erp_core::{
    ERMatrix, LinearPredictor, ModelPool, ParetoPoint, PromptRecord, RewardSampleSet,
    RoutingAssignment,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with 1-based line numbers, each decoded as `T`.
fn json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

fn at_line(path: &Path, line: usize, err: erp_core::Error) -> Error {
    Error::Parse { path: path.into(), line, message: err.to_string() }
}

pub fn load_prompts(path: &Path) -> Result<Vec<PromptRecord>> {
    let mut prompts: Vec<PromptRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, p) in json_lines::<PromptRecord>(path)? {
        if let Some(first) = prompts.first() {
            if first.embedding.len() != p.embedding.len() {
                let err = erp_core::Error::DimensionMismatch {
                    expected: first.embedding.len(),
                    found: p.embedding.len(),
                };
                return Err(at_line(path, line, err));
            }
        }
        if !seen.insert(p.id.clone()) {
            return Err(at_line(path, line, erp_core::Error::DuplicatePrompt(p.id)));
        }
        erp_core::validate_prompts(std::slice::from_ref(&p)).map_err(|e| at_line(path, line, e))?;
        prompts.push(p);
    }
    Ok(prompts)
}

pub fn load_rewards(path: &Path) -> Result<Vec<RewardSampleSet>> {
    let mut sets = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, s) in json_lines::<RewardSampleSet>(path)? {
        s.validate().map_err(|e| at_line(path, line, e))?;
        if !seen.insert((s.prompt_id.clone(), s.model_id.clone())) {
            let err = erp_core::Error::DuplicateRewardSet { prompt_id: s.prompt_id, model_id: s.model_id };
            return Err(at_line(path, line, err));
        }
        sets.push(s);
    }
    Ok(sets)
}

pub fn load_pool(path: &Path) -> Result<ModelPool> {
    let pool: ModelPool = load_json(path)?;
    pool.validate()?;
    Ok(pool)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline. Floats use the shortest decimal
/// that round-trips.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).expect("serializable value");
        bytes.push(b'\n');
    }
    write_bytes(path, &bytes)
}

/// File name for a model's predictor; path separators are replaced.
pub fn predictor_file_name(model_id: &str) -> String {
    let safe: String = model_id
        .chars()
        .map(|c| if c == '/' || c == '\\' || c == ':' { '_' } else { c })
        .collect();
    format!("{safe}.json")
}

pub fn write_predictor(dir: &Path, predictor: &LinearPredictor) -> Result<PathBuf> {
    let path = dir.join(predictor_file_name(&predictor.model_id));
    write_json(&path, predictor)?;
    Ok(path)
}

pub fn load_predictor(path: &Path) -> Result<LinearPredictor> {
    let p: LinearPredictor = load_json(path)?;
    p.validate()?;
    Ok(p)
}

/// Loads the predictors in `dir` and orders them by `pool`. Every pool model
/// needs exactly one predictor and all dimensions must agree.
pub fn load_predictors_for_pool(dir: &Path, pool: &ModelPool) -> Result<Vec<LinearPredictor>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut found: Vec<Option<LinearPredictor>> = vec![None; pool.len()];
    for path in paths {
        let p = load_predictor(&path)?;
        if let Some(i) = pool.index_of(&p.model_id) {
            if found[i].is_some() {
                return Err(Error::Data(format!("two predictor files for model `{}`", p.model_id)));
            }
            found[i] = Some(p);
        }
    }
    let mut out = Vec::with_capacity(pool.len());
    for (slot, entry) in found.into_iter().zip(&pool.models) {
        out.push(slot.ok_or_else(|| {
            Error::Data(format!("missing predictor for model `{}` in {}", entry.id, dir.display()))
        })?);
    }
    if let Some(bad) = out.iter().find(|p| p.dim != out[0].dim) {
        return Err(Error::Data(format!(
            "predictor `{}` has dim {} but `{}` has dim {}",
            bad.model_id, bad.dim, out[0].model_id, out[0].dim
        )));
    }
    Ok(out)
}

/// 17 significant digits, enough to round-trip any f64.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes<F>(header: &[String], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut bytes = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        w.write_record(header).expect("in-memory write");
        fill(&mut w).expect("in-memory write");
        w.flush().expect("in-memory write");
    }
    bytes
}

/// `prompt_id,<model_1>,...,<model_M>`, one row per prompt.
pub fn er_matrix_csv(matrix: &ERMatrix) -> Vec<u8> {
    let mut header = vec!["prompt_id".to_string()];
    header.extend(matrix.model_ids.iter().cloned());
    csv_bytes(&header, |w| {
        for (id, row) in matrix.prompt_ids.iter().zip(&matrix.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|&v| sig17(v)));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// `prompt_id,policy,lambda,chosen_model_id`.
pub fn assignments_csv<'a>(
    assignments: impl IntoIterator<Item = &'a RoutingAssignment>,
    pool: &ModelPool,
) -> Vec<u8> {
    let header: Vec<String> = ["prompt_id", "policy", "lambda", "chosen_model_id"].map(String::from).into();
    csv_bytes(&header, |w| {
        for a in assignments {
            let lambda = sig17(a.lambda);
            for (id, &c) in a.prompt_ids.iter().zip(&a.chosen) {
                w.write_record([id.as_str(), a.policy_name.as_str(), lambda.as_str(), pool.models[c].id.as_str()])?;
            }
        }
        Ok(())
    })
}

/// `policy,lambda,mean_cost,mean_regret`.
pub fn pareto_csv(points: &[ParetoPoint]) -> Vec<u8> {
    let header: Vec<String> = ["policy", "lambda", "mean_cost", "mean_regret"].map(String::from).into();
    csv_bytes(&header, |w| {
        for p in points {
            w.write_record([
                p.policy_name.clone(),
                sig17(p.lambda),
                sig17(p.mean_cost),
                sig17(p.mean_regret),
            ])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use erp_core::{PoolEntry, Provenance};

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn prompts_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "a.jsonl",
            "{\"id\":\"p1\",\"category\":\"math\",\"embedding\":[1,2,3]}\n\n{\"id\":\"p2\",\"category\":\"code\",\"embedding\":[0.5,0,-1]}\n",
        );
        let ps = load_prompts(&ok).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[1].embedding, vec![0.5, 0.0, -1.0]);

        let bad = write(
            dir.path(),
            "b.jsonl",
            "{\"id\":\"p1\",\"category\":\"m\",\"embedding\":[1,2,3]}\n{\"id\":\"p2\",\"category\":\"m\",\"embedding\":[1,2,3,4]}\n",
        );
        let err = load_prompts(&bad).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("dimension mismatch"));

        let dup = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"p1\",\"category\":\"m\",\"embedding\":[1]}\n{\"id\":\"p1\",\"category\":\"m\",\"embedding\":[2]}\n",
        );
        assert!(load_prompts(&dup).unwrap_err().to_string().contains("duplicate prompt id"));

        let garbage = write(dir.path(), "d.jsonl", "{\"id\":\"p1\"\n");
        assert!(matches!(load_prompts(&garbage), Err(Error::Parse { line: 1, .. })));

        assert!(load_prompts(&write(dir.path(), "e.jsonl", "")).unwrap().is_empty());
        assert!(matches!(load_prompts(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn rewards_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "r.jsonl", "{\"prompt_id\":\"p1\",\"model_id\":\"m1\",\"rewards\":[1.0,0.2,0.0]}\n");
        let sets = load_rewards(&ok).unwrap();
        assert_eq!(sets[0].rewards.len(), 3);
        assert_eq!(erp_core::empirical_er(&sets[0]), 0.4);

        let empty = write(dir.path(), "e.jsonl", "{\"prompt_id\":\"p1\",\"model_id\":\"m1\",\"rewards\":[]}\n");
        assert!(load_rewards(&empty).unwrap_err().to_string().contains("empty rewards"));

        let dup = write(
            dir.path(),
            "d.jsonl",
            "{\"prompt_id\":\"p1\",\"model_id\":\"m1\",\"rewards\":[1]}\n{\"prompt_id\":\"p1\",\"model_id\":\"m1\",\"rewards\":[2]}\n",
        );
        assert!(matches!(load_rewards(&dup), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn pool_and_predictor_files() {
        let dir = tempfile::tempdir().unwrap();
        let pool = write(dir.path(), "pool.json", "{\"models\":[{\"id\":\"llama-8b\",\"cost\":8},{\"id\":\"llama-70b\",\"cost\":70}]}");
        let pool = load_pool(&pool).unwrap();
        assert_eq!(pool.costs(), vec![8.0, 70.0]);
        let zero = write(dir.path(), "zero.json", "{\"models\":[{\"id\":\"a\",\"cost\":0}]}");
        assert!(load_pool(&zero).is_err());

        let pdir = dir.path().join("pred");
        let p = LinearPredictor {
            model_id: "llama-8b".into(),
            beta: 1.0,
            dim: 3,
            bias: 0.1 + 0.2,
            weights: vec![1.0 / 3.0, -2e-300, 12345.678901234567],
        };
        let path = write_predictor(&pdir, &p).unwrap();
        assert_eq!(load_predictor(&path).unwrap(), p);
        let text = fs::read_to_string(&path).unwrap();
        let keys: Vec<usize> = ["model_id", "beta", "dim", "bias", "weights"].iter().map(|k| text.find(k).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));

        let err = load_predictors_for_pool(&pdir, &pool).unwrap_err();
        assert!(err.to_string().contains("missing predictor for model `llama-70b`"));
    }

    #[test]
    fn csv_formats() {
        let m = ERMatrix::new(
            vec!["p,1".into()],
            vec!["a".into(), "b".into()],
            vec![vec![0.1, 1.0 / 3.0]],
            Provenance::Predicted,
        )
        .unwrap();
        let text = String::from_utf8(er_matrix_csv(&m)).unwrap();
        assert_eq!(text, "prompt_id,a,b\n\"p,1\",1.0000000000000001e-1,3.3333333333333331e-1\n");
        let back: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);

        let pool = ModelPool::new(vec![PoolEntry { id: "a".into(), cost: 1.0 }]).unwrap();
        let a = RoutingAssignment { prompt_ids: vec!["x".into()], chosen: vec![0], policy_name: "erp".into(), lambda: 0.5 };
        assert_eq!(
            String::from_utf8(assignments_csv([&a], &pool)).unwrap(),
            "prompt_id,policy,lambda,chosen_model_id\nx,erp,5.0000000000000000e-1,a\n"
        );
    }
}
