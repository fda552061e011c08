import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from starlette.middleware.base import BaseHTTPMiddleware
from starlette.requests import Request

from config import configure_logging, get_settings
from schema import SCHEMA_VERSION, HealthResponse

# Import routers
from runs import router as runs_router
from reports import router as reports_router

API_VERSION = "1.0.0"

logger = logging.getLogger(__name__)

# Security Headers Middleware
class SecurityHeadersMiddleware(BaseHTTPMiddleware):
    async def dispatch(self, request: Request, call_next):
        response = await call_next(request)
        response.headers["X-Content-Type-Options"] = "nosniff"
        response.headers["X-Frame-Options"] = "DENY"
        response.headers["X-Schema-Version"] = SCHEMA_VERSION
        return response

# Initialize FastAPI app
app = FastAPI(
    title="Swapcompare",
    description="Semi-quantum private comparison simulator",
    version=API_VERSION,
    docs_url="/docs",
    redoc_url="/redoc"
)

app.add_middleware(SecurityHeadersMiddleware)

# CORS Configuration (SQPC_ALLOWED_ORIGINS, comma separated)
app.add_middleware(
    CORSMiddleware,
    allow_origins=get_settings().origins,
    allow_credentials=False,
    allow_methods=["GET", "POST"],
    allow_headers=["Content-Type"],
)

@app.on_event("startup")
def startup_event():
    configure_logging()
    logger.info("Swapcompare API %s ready, docs at /docs", API_VERSION)

# Include routers
app.include_router(runs_router)
app.include_router(reports_router)

# ============================================
# HEALTH CHECK
# ============================================

@app.get("/", response_model=HealthResponse)
def root():
    """Root endpoint - API health check"""
    return HealthResponse(status="running", version=API_VERSION)

@app.get("/health", response_model=HealthResponse)
def health_check():
    """Health check endpoint"""
    return HealthResponse(status="healthy", version=API_VERSION)

if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "main:app",
        host=settings.host,
        port=settings.port,
        reload=True
    )
