use serde::{Deserialize, Serialize};

use crate::index::QueryBox;

use super::branch::{BranchModel, EnsembleModel};

/// Human-readable description of a box model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub kind: String,
    pub members: Vec<MemberDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDescriptor {
    pub subset: Vec<u32>,
    pub catalog_position: usize,
    pub training_f1: f64,
    pub boxes: Vec<BoxDescriptor>,
}

/// Bounds per subset dimension; `null` stands for an unbounded side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDescriptor {
    pub lower: Vec<Option<f32>>,
    pub upper: Vec<Option<f32>>,
    pub sql: String,
}

impl From<&QueryBox> for BoxDescriptor {
    fn from(b: &QueryBox) -> Self {
        let finite = |v: &f32| v.is_finite().then_some(*v);
        BoxDescriptor {
            lower: b.lower().iter().map(finite).collect(),
            upper: b.upper().iter().map(finite).collect(),
            sql: b.to_sql(),
        }
    }
}

impl From<&BranchModel> for MemberDescriptor {
    fn from(m: &BranchModel) -> Self {
        MemberDescriptor {
            subset: m.subset().dims().to_vec(),
            catalog_position: m.catalog_position(),
            training_f1: m.training_fit().f1(),
            boxes: m.boxes().iter().map(BoxDescriptor::from).collect(),
        }
    }
}

impl BranchModel {
    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor { kind: "dbranch".into(), members: vec![self.into()] }
    }
}

impl EnsembleModel {
    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: "dbranch_ens".into(),
            members: self.members().iter().map(MemberDescriptor::from).collect(),
        }
    }
}
