import sys
import os

sys.path.append(os.path.dirname(os.path.abspath(__file__)))


def test_numpy():
    """Test NumPy installation"""
    print("🔢 Testing NumPy...")

    try:
        import numpy as np
        rng = np.random.default_rng(np.random.SeedSequence(1, spawn_key=(0,)))
        rng.integers(0, 2, size=64)
        print(f"✅ NumPy {np.__version__} with SeedSequence spawning")
        return True
    except Exception as e:
        print(f"❌ NumPy error: {e}")
        return False


def test_scipy():
    """Test SciPy pieces used by the estimators"""
    print("\n📐 Testing SciPy...")

    try:
        import scipy
        from scipy.interpolate import CubicSpline
        from scipy.stats import norm

        spline = CubicSpline([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], bc_type="natural")
        print(f"✅ SciPy {scipy.__version__}")
        print(f"   📈 Natural spline at 0.25: {float(spline(0.25)):.4f}")
        print(f"   🎯 Normal 95% quantile: {norm.ppf(0.95):.4f}")
        return True
    except Exception as e:
        print(f"❌ SciPy error: {e}")
        return False


def test_joblib():
    """Test joblib worker pools"""
    print("\n⚙️ Testing joblib...")

    try:
        from joblib import Parallel, delayed
        squares = Parallel(n_jobs=2, prefer="threads")(delayed(pow)(i, 2) for i in range(4))
        print(f"✅ Thread pool returned {squares}")
        return True
    except Exception as e:
        print(f"❌ joblib error: {e}")
        return False


def test_smoke_run():
    """Tiny simulation with bands, end to end"""
    print("\n🧪 Running a tiny simulation...")

    try:
        from core.settings_manager import SettingsManager

        manager = SettingsManager()
        settings = manager.apply_overrides({
            "replications": 2, "inference": True, "bootstrap_chains": 20, "out": "",
            "dgp": {"n": 200, "m": 10},
        })
        from core.experiments import run_simulate
        report = run_simulate(settings)
        cell = report["rmise"][0]
        print(f"✅ RMISE means: {[round(v, 4) for v in cell['mean']]}")
        print(f"   📊 Percentile-band coverage (tau=0.1): {report['coverage'][0]['mean_coverage']:.2f}")
        return True
    except Exception as e:
        print(f"❌ Smoke run error: {e}")
        return False


def main():
    """Run all tests"""
    print("🧪 Functional GM Regression - System Test")
    print("=" * 40)

    numpy_ok = test_numpy()
    scipy_ok = test_scipy()
    joblib_ok = test_joblib()
    smoke_ok = numpy_ok and scipy_ok and joblib_ok and test_smoke_run()

    print("\n" + "=" * 40)
    print("📊 TEST RESULTS")
    print("=" * 40)
    print(f"🔢 NumPy: {'✅ PASS' if numpy_ok else '❌ FAIL'}")
    print(f"📐 SciPy: {'✅ PASS' if scipy_ok else '❌ FAIL'}")
    print(f"⚙️ joblib: {'✅ PASS' if joblib_ok else '❌ FAIL'}")
    print(f"🧪 Smoke run: {'✅ PASS' if smoke_ok else '❌ FAIL'}")

    if numpy_ok and scipy_ok and joblib_ok and smoke_ok:
        print("\n🎉 All tests passed! Your system is ready.")
        print("💡 You can now run: python main.py simulate")
        return 0

    print("\n❌ Some tests failed. Please fix the issues above.")
    print("   💡 Try reinstalling with: pip install -r requirements.txt")
    return 1


if __name__ == "__main__":
    sys.exit(main())
