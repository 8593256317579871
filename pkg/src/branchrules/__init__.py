"""branchrules: interpretable rulesets from black-box feature importances.

The pipeline ranks features with a bagged-tree ensemble (or an imported
importance file), builds a layered surrogate binary tree over the top-ranked
features, keeps the branch prefixes whose splits pass a conditional
chi-square test, and turns them into a precision-ordered, pruned IF/THEN
ruleset that abstains outside its coverage.
"""

from .dataset import (
    BinaryDataset,
    FoldPlan,
    RawTable,
    dataset_from_json,
    dataset_to_json,
    decode_feature_names,
    load_csv,
    one_hot_encode,
    stratified_folds,
)
from .engine import (
    ExtractionConfig,
    ExtractionReport,
    GridSearchResult,
    extract,
    extract_recursive,
    grid_search,
    run_extraction,
)
from .errors import BranchRulesError, DataError, ExtractionError
from .forest import (
    ForestModel,
    ImportanceRanking,
    RankingSource,
    TreeNode,
    gini_impurity,
    gini_ranking,
    import_importances,
    permutation_importance,
    predict,
    predict_batch,
    train_forest,
)
from .rules import (
    ABSTAIN,
    Rule,
    Ruleset,
    RulesetScore,
    categorize,
    order_rules,
    prune_rules,
)
from .stats import (
    ContingencyTable,
    PatternTestResult,
    chi_square_p_value,
    chi_square_statistic,
    test_split,
)
from .surrogate import (
    BranchPattern,
    SurrogateNode,
    build_surrogate_tree,
    enumerate_prefixes,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "BinaryDataset",
    "BranchPattern",
    "BranchRulesError",
    "ContingencyTable",
    "DataError",
    "ExtractionConfig",
    "ExtractionError",
    "ExtractionReport",
    "FoldPlan",
    "ForestModel",
    "GridSearchResult",
    "ImportanceRanking",
    "PatternTestResult",
    "RankingSource",
    "RawTable",
    "Rule",
    "Ruleset",
    "RulesetScore",
    "SurrogateNode",
    "TreeNode",
    "build_surrogate_tree",
    "categorize",
    "chi_square_p_value",
    "chi_square_statistic",
    "dataset_from_json",
    "dataset_to_json",
    "decode_feature_names",
    "enumerate_prefixes",
    "extract",
    "extract_recursive",
    "gini_impurity",
    "gini_ranking",
    "grid_search",
    "import_importances",
    "load_csv",
    "one_hot_encode",
    "order_rules",
    "permutation_importance",
    "predict",
    "predict_batch",
    "prune_rules",
    "run_extraction",
    "stratified_folds",
    "test_split",
    "train_forest",
]
