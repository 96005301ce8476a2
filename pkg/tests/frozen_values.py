"""Frozen reference values; regenerate with ``tests/generate_frozen.py``."""

RGAMMA_0_6 = 0.67150497244207336
ML_06_06_M1 = 0.17110228338391676
ML_06_1_M2 = 0.23557103111182496
ML_075_2_M3 = 0.30009861325966477
ML_09_09_M12 = 0.00091508415994729338
W_STAR_K01_S003_A1 = 10.495720687362037
RL_HALF_OF_ONE_AT_1 = 1.1283791670955126
INT_T_POW_M04 = 1.6666666666666667
