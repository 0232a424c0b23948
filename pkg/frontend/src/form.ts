import type { PersonaForm } from './types';

/** Persona presets offered alongside the free-text descriptor. */
export const DESCRIPTOR_PRESETS = [
  'Woman',
  'Transgender woman',
  'Man',
  'Blind man with a cane',
  'Homeless man',
];

export interface FormValues {
  persona: PersonaForm;
  lat: number;
  lon: number;
  count: number;
}

export function readForm(root: ParentNode): FormValues | string {
  const descriptor = (root.querySelector('#descriptor') as HTMLInputElement).value.trim();
  const age = Number((root.querySelector('#age') as HTMLInputElement).value);
  const mode = (root.querySelector('#travel-mode') as HTMLSelectElement).value;
  const lat = Number((root.querySelector('#lat') as HTMLInputElement).value);
  const lon = Number((root.querySelector('#lon') as HTMLInputElement).value);
  const count = Number((root.querySelector('#count') as HTMLSelectElement).value);
  if (!descriptor) return 'Describe the traveler first.';
  if (!Number.isInteger(age) || age < 1 || age > 120) return 'Age must be between 1 and 120.';
  if (mode !== 'solo' && mode !== 'group') return 'Pick a travel mode.';
  if (!Number.isFinite(lat) || Math.abs(lat) > 85) return 'Latitude must be within ±85.';
  if (!Number.isFinite(lon) || Math.abs(lon) > 180) return 'Longitude must be within ±180.';
  return {
    persona: { descriptor, age, travel_mode: mode },
    lat,
    lon,
    count,
  };
}
