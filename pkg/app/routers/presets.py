"""Preset catalogue endpoints"""

from fastapi import APIRouter, HTTPException, status

from app.models import ExperimentPreset, PresetListResponse
from app.presets import UnknownPresetError, get_preset, list_presets

router = APIRouter()


@router.get("", response_model=PresetListResponse)
async def get_presets():
    """List every registered experiment preset"""
    return PresetListResponse(presets=list_presets())


@router.get("/{name}", response_model=ExperimentPreset)
async def get_preset_by_name(name: str):
    """Get one preset by name"""
    try:
        return get_preset(name)
    except UnknownPresetError as e:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail={"error": "Preset not found", "message": str(e.args[0])},
        )
