//! Bundled experiment configs, one per verification target. `mll recipes`
//! lists them and `mll run <name>` runs one directly.

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "duality_all_maps",
        description: "inverse-map, factor, finite-difference and primal/dual step consistency on all four map kinds",
        json: include_str!("../recipes/duality_all_maps.json"),
    },
    Recipe {
        name: "ula_bias_quadratic",
        description: "Euclidean chain bias against the closed-form stationary variance gap",
        json: include_str!("../recipes/ula_bias_quadratic.json"),
    },
    Recipe {
        name: "gbm_threshold",
        description: "geometric Brownian motion second-moment decay and the unit contraction threshold",
        json: include_str!("../recipes/gbm_threshold.json"),
    },
    Recipe {
        name: "contraction_orthant",
        description: "synchronous-coupling contraction rate of the orthant instance (target rate 1)",
        json: include_str!("../recipes/contraction_orthant.json"),
    },
    Recipe {
        name: "deviation_orthant",
        description: "short-time deviation envelope (4M t) on the orthant instance",
        json: include_str!("../recipes/deviation_orthant.json"),
    },
    Recipe {
        name: "growth_orthant",
        description: "short-time growth envelope (gamma t) on the orthant instance",
        json: include_str!("../recipes/growth_orthant.json"),
    },
    Recipe {
        name: "local_error_quadratic",
        description: "local weak/strong error orders with additive noise (strong order 3/2)",
        json: include_str!("../recipes/local_error_quadratic.json"),
    },
    Recipe {
        name: "local_error_orthant",
        description: "local weak/strong error orders on the orthant barrier (strong order 1)",
        json: include_str!("../recipes/local_error_orthant.json"),
    },
    Recipe {
        name: "local_error_gbm",
        description: "local weak/strong error orders with multiplicative noise (strong order 1)",
        json: include_str!("../recipes/local_error_gbm.json"),
    },
    Recipe {
        name: "bias_scan_orthant",
        description: "asymptotic bias vs step size on the orthant instance (sqrt-h scaling)",
        json: include_str!("../recipes/bias_scan_orthant.json"),
    },
    Recipe {
        name: "constants_orthant",
        description: "closed-form mixing constants, step ceiling and mixing-time scaling",
        json: include_str!("../recipes/constants_orthant.json"),
    },
    Recipe {
        name: "msc_2d_epsilon",
        description: "modified self-concordance bound and witness on the planar cone family",
        json: include_str!("../recipes/msc_2d_epsilon.json"),
    },
];

/// Bundled recipe names, in listing order.
pub fn list_recipes() -> Vec<&'static str> {
    RECIPES.iter().map(|r| r.name).collect()
}

pub fn get_recipe(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}
