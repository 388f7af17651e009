import os
from dotenv import load_dotenv

load_dotenv()

# Логирование
LOG_LEVEL = os.getenv("PERETD_LOG_LEVEL", "WARNING")

# Параллельные прогоны
JOBS = int(os.getenv("PERETD_JOBS", "1"))

# Воспроизводимость
BASE_SEED = int(os.getenv("PERETD_BASE_SEED", "0"))

# Порог расхождения для ||theta|| и |F|
DIVERGENCE_THRESHOLD = float(os.getenv("PERETD_DIVERGENCE_THRESHOLD", "1e12"))
