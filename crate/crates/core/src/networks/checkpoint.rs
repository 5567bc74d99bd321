//! Single-file model checkpoint: a versioned textual header describing every
//! parameter matrix, a `DATA` marker line, then all entries as little-endian
//! f64 in header order.
//!
//! Header grammar (one item per line, space-separated):
//! ```text
//! COCO-IMC-CHECKPOINT v1
//! views <count>
//! clusters <k>
//! view_dims <d1> <d2>
//! hidden <h1> <h2> ...
//! latent <dim>
//! projector_hidden <dim>
//! projector_out <dim>
//! predictor_hidden <dim>
//! cross_hidden <dim>
//! predictor_softmax <0|1>
//! matrix <name> <rows> <cols>     (repeated, in data order)
//! DATA
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::networks::{init_model, Mlp, ModelArch, ModelBundle};
use crate::numerics::Matrix;

const MAGIC: &str = "COCO-IMC-CHECKPOINT v1";

fn mlp_entries<'a>(prefix: &str, mlp: &'a Mlp) -> Vec<(String, &'a Matrix)> {
    mlp.params()
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let kind = if i % 2 == 0 { "w" } else { "b" };
            (format!("{prefix}.{kind}{}", i / 2), p)
        })
        .collect()
}

fn named_params(bundle: &ModelBundle) -> Vec<(String, &Matrix)> {
    let mut out = Vec::new();
    for (v, vm) in bundle.views.iter().enumerate() {
        let parts: [(&str, &Mlp); 7] = [
            ("encoder", &vm.encoder),
            ("decoder", &vm.decoder),
            ("projector", &vm.dual.online.projector),
            ("predictor", &vm.dual.online.predictor),
            ("cluster_head", &vm.cluster_head),
            ("target_encoder", &vm.dual.target.encoder),
            ("target_projector", &vm.dual.target.projector),
        ];
        for (name, mlp) in parts {
            out.extend(mlp_entries(&format!("view{v}.{name}"), mlp));
        }
    }
    out.extend(mlp_entries("cross.g12", &bundle.cross.g12));
    out.extend(mlp_entries("cross.g21", &bundle.cross.g21));
    out
}

fn named_params_mut(bundle: &mut ModelBundle) -> Vec<(String, &mut Matrix)> {
    let mut out: Vec<(String, &mut Matrix)> = Vec::new();
    let (views, cross) = (&mut bundle.views, &mut bundle.cross);
    for (v, vm) in views.iter_mut().enumerate() {
        let parts: [(&str, &mut Mlp); 7] = [
            ("encoder", &mut vm.encoder),
            ("decoder", &mut vm.decoder),
            ("projector", &mut vm.dual.online.projector),
            ("predictor", &mut vm.dual.online.predictor),
            ("cluster_head", &mut vm.cluster_head),
            ("target_encoder", &mut vm.dual.target.encoder),
            ("target_projector", &mut vm.dual.target.projector),
        ];
        for (name, mlp) in parts {
            let prefix = format!("view{v}.{name}");
            for (i, p) in mlp.params_mut().into_iter().enumerate() {
                let kind = if i % 2 == 0 { "w" } else { "b" };
                out.push((format!("{prefix}.{kind}{}", i / 2), p));
            }
        }
    }
    for (prefix, mlp) in [("cross.g12", &mut cross.g12), ("cross.g21", &mut cross.g21)] {
        for (i, p) in mlp.params_mut().into_iter().enumerate() {
            let kind = if i % 2 == 0 { "w" } else { "b" };
            out.push((format!("{prefix}.{kind}{}", i / 2), p));
        }
    }
    out
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let entries = named_params(bundle);
    let arch = bundle.arch();
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("views {}\n", bundle.views.len()));
    header.push_str(&format!("clusters {}\n", bundle.k()));
    header.push_str(&format!(
        "view_dims {}\n",
        bundle
            .view_dims()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    header.push_str(&format!(
        "hidden {}\n",
        arch.hidden
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    header.push_str(&format!("latent {}\n", arch.latent));
    header.push_str(&format!("projector_hidden {}\n", arch.projector_hidden));
    header.push_str(&format!("projector_out {}\n", arch.projector_out));
    header.push_str(&format!("predictor_hidden {}\n", arch.predictor_hidden));
    header.push_str(&format!("cross_hidden {}\n", arch.cross_hidden));
    header.push_str(&format!(
        "predictor_softmax {}\n",
        u8::from(arch.predictor_softmax)
    ));
    for (name, m) in &entries {
        header.push_str(&format!("matrix {name} {} {}\n", m.rows(), m.cols()));
    }
    header.push_str("DATA\n");

    let mut bytes = header.into_bytes();
    for (_, m) in &entries {
        for v in m.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let data_marker = b"\nDATA\n";
    let marker_pos = bytes
        .windows(data_marker.len())
        .position(|w| w == data_marker)
        .ok_or_else(|| Error::Checkpoint("missing DATA marker".into()))?;
    let header = std::str::from_utf8(&bytes[..marker_pos])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let payload = &bytes[marker_pos + data_marker.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "unsupported format or version: {magic:?}"
        )));
    }

    let mut views = None;
    let mut clusters = None;
    let mut view_dims: Option<Vec<usize>> = None;
    let mut arch = ModelArch::default();
    let mut records: Vec<(String, usize, usize)> = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let usize_list = |vals: &[&str]| -> Result<Vec<usize>> {
            vals.iter()
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| Error::Checkpoint(format!("bad integer in {key} line: {v:?}")))
                })
                .collect()
        };
        match key {
            "views" => views = Some(usize_list(&rest)?[0]),
            "clusters" => clusters = Some(usize_list(&rest)?[0]),
            "view_dims" => view_dims = Some(usize_list(&rest)?),
            "hidden" => arch.hidden = usize_list(&rest)?,
            "latent" => arch.latent = usize_list(&rest)?[0],
            "projector_hidden" => arch.projector_hidden = usize_list(&rest)?[0],
            "projector_out" => arch.projector_out = usize_list(&rest)?[0],
            "predictor_hidden" => arch.predictor_hidden = usize_list(&rest)?[0],
            "cross_hidden" => arch.cross_hidden = usize_list(&rest)?[0],
            "predictor_softmax" => arch.predictor_softmax = usize_list(&rest)?[0] != 0,
            "matrix" => {
                if rest.len() != 3 {
                    return Err(Error::Checkpoint(format!(
                        "malformed matrix line: {line:?}"
                    )));
                }
                let dims = usize_list(&rest[1..])?;
                records.push((rest[0].to_string(), dims[0], dims[1]));
            }
            "" => {}
            other => {
                return Err(Error::Checkpoint(format!("unknown header key {other:?}")));
            }
        }
    }
    let views = views.ok_or_else(|| Error::Checkpoint("missing views line".into()))?;
    let clusters = clusters.ok_or_else(|| Error::Checkpoint("missing clusters line".into()))?;
    let view_dims = view_dims.ok_or_else(|| Error::Checkpoint("missing view_dims line".into()))?;
    if view_dims.len() != views {
        return Err(Error::Checkpoint(format!(
            "views={views} but view_dims has {} entries",
            view_dims.len()
        )));
    }

    let total_entries: usize = records.iter().map(|(_, r, c)| r * c).sum();
    if payload.len() != total_entries * 8 {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header describes {}",
            payload.len(),
            total_entries * 8
        )));
    }

    let mut bundle = init_model(&view_dims, &arch, clusters, 0)?;
    let slots = named_params_mut(&mut bundle);
    if slots.len() != records.len() {
        return Err(Error::Checkpoint(format!(
            "architecture implies {} matrices, header lists {}",
            slots.len(),
            records.len()
        )));
    }
    let mut offset = 0usize;
    for ((name, rows, cols), (slot_name, slot)) in records.iter().zip(slots) {
        if name != &slot_name || (*rows, *cols) != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "record {name} ({rows}x{cols}) does not match expected {slot_name} ({})",
                slot.shape_str()
            )));
        }
        for v in slot.data_mut().iter_mut() {
            let mut le = [0u8; 8];
            le.copy_from_slice(&payload[offset..offset + 8]);
            *v = f64::from_le_bytes(le);
            offset += 8;
        }
    }
    Ok(bundle)
}
