#!/usr/bin/env python3
"""
Demo script: synthesize a fog dataset, then run every stage on it.

synth -> ingest -> correlation analysis -> featurize -> train -> predict -> evaluate
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from src.components import (
    EnsembleTrainingComponent,
    FeaturizationComponent,
    FogIngestionComponent,
    SynthesisComponent,
    TlcaComponent,
    VerificationComponent,
)
from src.components.storage import predictions_frame
from src.config.models import PipelineConfig
from src.models import VariableCatalog
from src.utils import FogPipelineError, setup_logging


def main():
    """Run the stages one by one and print what each produced."""
    print("🌫️  Sea-Fog Forecasting Pipeline Demo")
    print("=" * 50)

    try:
        config_path = Path("config/default.yaml")
        config = PipelineConfig.from_yaml(config_path)
        setup_logging("WARNING")
        print(f"✓ Loaded configuration from {config_path}")

        data_dir = Path(config.paths.data_dir)

        print("\n🎲 Step 1: Synthetic Data")
        print("-" * 30)
        synth = SynthesisComponent(config).execute(data_dir)
        truth = synth.truth
        print(f"✓ Wrote {len(truth['rows'])} observation rows for {len(truth['stations'])} stations")
        print(f"   - Planted rule: {truth['humidity_variable']} at lag {truth['planted_lag']} h "
              f">= {truth['rh_threshold']} and {truth['wind_variable']} < {truth['wind_threshold']}")
        print(f"   - Rule fog frequency: {truth['rule_fog_frequency']:.4f}")

        print("\n📥 Step 2: Ingestion")
        print("-" * 30)
        catalog = VariableCatalog.from_yaml(synth.paths["catalog"])
        dataset = FogIngestionComponent(config).execute(synth.paths["observations"], synth.paths["grid"], catalog)
        print(f"✓ Assembled {dataset.n_samples} samples × {len(catalog)} channels × {dataset.horizon} leads")

        print("\n🔗 Step 3: Lagged Correlation Analysis")
        print("-" * 30)
        tlca = TlcaComponent(config)
        table, predictors = tlca.execute(dataset)
        print(f"✓ Retained {len(predictors)} (variable, lag) predictors")
        for variable in dict.fromkeys(v for v, _ in predictors.entries):
            print(f"   - {variable}: strongest at lag {table.strongest_lag(variable)} h")

        print("\n🧮 Step 4: Featurization")
        print("-" * 30)
        featurization = FeaturizationComponent(config)
        matrix = featurization.execute(dataset, predictors)
        train, val, test = featurization.split(matrix)
        print(f"✓ {matrix.n_rows} rows × {matrix.n_features} features, fog frequency {matrix.fog_frequency():.4f}")
        print(f"   - Train / validation / test rows: {train.n_rows} / {val.n_rows} / {test.n_rows}")

        print("\n🌲 Step 5: Ensemble Training")
        print("-" * 30)
        model = EnsembleTrainingComponent(config).execute(train, val if val.n_rows else None)
        print(f"✓ Trained {len(model.members)} members ({model.config.strategy})")
        print(f"   - Trees per member: {[len(m.trees) for m in model.members]}")

        print("\n📊 Step 6: Prediction and Verification")
        print("-" * 30)
        verification = VerificationComponent(config)
        predictions = predictions_frame(test, model.predict_proba(test), model.config.threshold)
        report = verification.execute(predictions)
        baseline = verification.baseline(dataset.take(dataset.launch >= test.launch.min()) if test.n_rows else dataset)
        for ours, theirs in zip(report.aggregates, baseline.aggregates):
            model_scores = ours.scores.formatted()
            fsl_scores = theirs.scores.formatted()
            print(f"   - {ours.label}: model ETS {model_scores['ets']} POD {model_scores['pod']} | "
                  f"FSL ETS {fsl_scores['ets']} POD {fsl_scores['pod']}")

        print("\n✅ Pipeline demo completed successfully!")

    except (FogPipelineError, FileNotFoundError) as e:
        print(f"\n❌ Pipeline demo failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
