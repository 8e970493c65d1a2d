//! Reader and writer for OpenCV Haar cascade XML files.
//!
//! Both layouts are accepted: the current `<cascade>` layout with a shared
//! `<features>` table referenced from `<internalNodes>`, and the legacy
//! `type_id="opencv-haar-classifier"` layout with inline trees of stumps.
//! Only stump classifiers over upright features are supported.

use std::fmt::Write as _;

use roxmltree::{Document, Node};
use thiserror::Error;
use vpc_core::haar::{CascadeModel, CascadeStage, HaarError, HaarFeature, WeakClassifier, WeightedRect};

#[derive(Debug, Error)]
pub enum CascadeXmlError {
    #[error("XML syntax error at {row}:{col}: {message}")]
    XmlSyntax { row: u32, col: u32, message: String },
    #[error("cascade schema violation at {0}")]
    SchemaViolation(String),
    #[error("unsupported cascade feature: {0}")]
    UnsupportedFeature(String),
    #[error(transparent)]
    Model(#[from] HaarError),
}

type Result<T> = std::result::Result<T, CascadeXmlError>;

fn schema(path: impl Into<String>) -> CascadeXmlError {
    CascadeXmlError::SchemaViolation(path.into())
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str, path: &str) -> Result<Node<'a, 'i>> {
    node.children()
        .find(|c| c.has_tag_name(name))
        .ok_or_else(|| schema(format!("{path}/{name}")))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element() && c.has_tag_name("_"))
}

fn text<'a>(node: Node<'a, '_>) -> &'a str {
    node.text().unwrap_or("").trim()
}

fn numbers(node: Node, path: &str) -> Result<Vec<f64>> {
    node.text()
        .unwrap_or("")
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| schema(format!("{path} (bad number {t:?})"))))
        .collect()
}

fn number(node: Node, name: &str, path: &str) -> Result<f64> {
    let n = child(node, name, path)?;
    let v = numbers(n, &format!("{path}/{name}"))?;
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(schema(format!("{path}/{name}"))),
    }
}

fn parse_rects(feature: Node, path: &str) -> Result<HaarFeature> {
    if let Some(t) = feature.children().find(|c| c.has_tag_name("tilted")) {
        if text(t) != "0" {
            return Err(CascadeXmlError::UnsupportedFeature(format!("tilted feature at {path}")));
        }
    }
    let rects_node = child(feature, "rects", path)?;
    let mut rects = Vec::new();
    for (i, r) in items(rects_node).enumerate() {
        let rpath = format!("{path}/rects/{i}");
        let v = numbers(r, &rpath)?;
        if v.len() != 5 || v[..4].iter().any(|c| *c < 0.0 || c.fract() != 0.0) {
            return Err(schema(rpath));
        }
        rects.push(WeightedRect {
            x: v[0] as u32,
            y: v[1] as u32,
            w: v[2] as u32,
            h: v[3] as u32,
            weight: v[4],
        });
    }
    if rects.is_empty() {
        return Err(schema(format!("{path}/rects")));
    }
    Ok(HaarFeature { rects })
}

/// Parses a cascade document in either OpenCV layout.
pub fn parse_cascade(document: &str) -> Result<CascadeModel> {
    let doc = Document::parse(document).map_err(|e| {
        let pos = e.pos();
        CascadeXmlError::XmlSyntax {
            row: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if let Some(cascade) = root.descendants().find(|n| n.has_tag_name("cascade")) {
        return parse_current(cascade);
    }
    let legacy = root
        .descendants()
        .find(|n| n.attribute("type_id") == Some("opencv-haar-classifier"))
        .or_else(|| {
            root.children()
                .find(|n| n.is_element() && n.children().any(|c| c.has_tag_name("size")))
        })
        .ok_or_else(|| schema("cascade"))?;
    parse_legacy(legacy)
}

fn parse_current(cascade: Node) -> Result<CascadeModel> {
    let path = "cascade";
    if let Some(st) = cascade.children().find(|c| c.has_tag_name("stageType")) {
        if text(st) != "BOOST" {
            return Err(CascadeXmlError::UnsupportedFeature(format!("stageType {}", text(st))));
        }
    }
    if let Some(ft) = cascade.children().find(|c| c.has_tag_name("featureType")) {
        if text(ft) != "HAAR" {
            return Err(CascadeXmlError::UnsupportedFeature(format!("featureType {}", text(ft))));
        }
    }
    let width = number(cascade, "width", path)? as u32;
    let height = number(cascade, "height", path)? as u32;
    let features_node = child(cascade, "features", path)?;
    let features = items(features_node)
        .enumerate()
        .map(|(i, f)| parse_rects(f, &format!("cascade/features/{i}")))
        .collect::<Result<Vec<_>>>()?;
    let stages_node = child(cascade, "stages", path)?;
    let mut stages = Vec::new();
    for (si, stage) in items(stages_node).enumerate() {
        let spath = format!("cascade/stages/{si}");
        let stage_threshold = number(stage, "stageThreshold", &spath)?;
        let weak_node = child(stage, "weakClassifiers", &spath)?;
        let mut weak_classifiers = Vec::new();
        for (wi, weak) in items(weak_node).enumerate() {
            let wpath = format!("{spath}/weakClassifiers/{wi}");
            let nodes = numbers(child(weak, "internalNodes", &wpath)?, &format!("{wpath}/internalNodes"))?;
            let leaves = numbers(child(weak, "leafValues", &wpath)?, &format!("{wpath}/leafValues"))?;
            if nodes.len() != 4 || leaves.len() != 2 {
                if nodes.len() > 4 && nodes.len() % 4 == 0 {
                    return Err(CascadeXmlError::UnsupportedFeature(format!("non-stump tree at {wpath}")));
                }
                return Err(schema(format!("{wpath}/internalNodes")));
            }
            let idx = nodes[2];
            if idx < 0.0 || idx.fract() != 0.0 || idx as usize >= features.len() {
                return Err(schema(format!("{wpath}/internalNodes (feature index {idx})")));
            }
            weak_classifiers.push(WeakClassifier {
                feature: features[idx as usize].clone(),
                threshold: nodes[3],
                left_value: leaves[0],
                right_value: leaves[1],
            });
        }
        stages.push(CascadeStage {
            weak_classifiers,
            stage_threshold,
        });
    }
    Ok(CascadeModel::new(width, height, stages)?)
}

fn parse_legacy(root: Node) -> Result<CascadeModel> {
    let size = numbers(child(root, "size", "haarcascade")?, "haarcascade/size")?;
    let [w, h] = size.as_slice() else {
        return Err(schema("haarcascade/size"));
    };
    let stages_node = child(root, "stages", "haarcascade")?;
    let mut stages = Vec::new();
    for (si, stage) in items(stages_node).enumerate() {
        let spath = format!("haarcascade/stages/{si}");
        let stage_threshold = number(stage, "stage_threshold", &spath)?;
        let trees = child(stage, "trees", &spath)?;
        let mut weak_classifiers = Vec::new();
        for (ti, tree) in items(trees).enumerate() {
            let tpath = format!("{spath}/trees/{ti}");
            let nodes: Vec<Node> = items(tree).collect();
            if nodes.len() != 1 {
                return Err(CascadeXmlError::UnsupportedFeature(format!(
                    "tree with {} nodes at {tpath}",
                    nodes.len()
                )));
            }
            let node = nodes[0];
            let npath = format!("{tpath}/0");
            if node.children().any(|c| c.has_tag_name("left_node") || c.has_tag_name("right_node")) {
                return Err(CascadeXmlError::UnsupportedFeature(format!("non-stump tree at {npath}")));
            }
            let feature = parse_rects(child(node, "feature", &npath)?, &format!("{npath}/feature"))?;
            weak_classifiers.push(WeakClassifier {
                feature,
                threshold: number(node, "threshold", &npath)?,
                left_value: number(node, "left_val", &npath)?,
                right_value: number(node, "right_val", &npath)?,
            });
        }
        stages.push(CascadeStage {
            weak_classifiers,
            stage_threshold,
        });
    }
    Ok(CascadeModel::new(*w as u32, *h as u32, stages)?)
}

/// Canonical serialization in the current layout, one feature per weak
/// classifier. Numbers are written in shortest round-trip form, so parsing
/// the output reproduces the model exactly.
pub fn to_cascade_xml(model: &CascadeModel) -> String {
    let (w, h) = model.base_size();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\"?>\n<opencv_storage>\n<cascade type_id=\"opencv-cascade-classifier\">\n");
    let _ = writeln!(out, "  <stageType>BOOST</stageType>\n  <featureType>HAAR</featureType>");
    let _ = writeln!(out, "  <height>{h}</height>\n  <width>{w}</width>");
    let _ = writeln!(out, "  <stageNum>{}</stageNum>\n  <stages>", model.stages().len());
    let mut feature_idx = 0usize;
    for stage in model.stages() {
        let _ = writeln!(out, "    <_>\n      <maxWeakCount>{}</maxWeakCount>", stage.weak_classifiers.len());
        let _ = writeln!(out, "      <stageThreshold>{:?}</stageThreshold>", stage.stage_threshold);
        out.push_str("      <weakClassifiers>\n");
        for weak in &stage.weak_classifiers {
            let _ = writeln!(
                out,
                "        <_>\n          <internalNodes>0 -1 {feature_idx} {:?}</internalNodes>\n          <leafValues>{:?} {:?}</leafValues></_>",
                weak.threshold, weak.left_value, weak.right_value
            );
            feature_idx += 1;
        }
        out.push_str("      </weakClassifiers></_>\n");
    }
    out.push_str("  </stages>\n  <features>\n");
    for stage in model.stages() {
        for weak in &stage.weak_classifiers {
            out.push_str("    <_>\n      <rects>\n");
            for r in &weak.feature.rects {
                let _ = writeln!(out, "        <_>{} {} {} {} {:?}</_>", r.x, r.y, r.w, r.h, r.weight);
            }
            out.push_str("      </rects>\n      <tilted>0</tilted></_>\n");
        }
    }
    out.push_str("  </features>\n</cascade>\n</opencv_storage>\n");
    out
}
