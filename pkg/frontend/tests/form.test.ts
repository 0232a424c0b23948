import { beforeEach, describe, expect, it } from 'vitest';
import { DESCRIPTOR_PRESETS, readForm } from '../src/form';

function setForm(values: Record<string, string>) {
  document.body.innerHTML = `
    <input id="descriptor" value="${values.descriptor ?? 'Man'}" />
    <input id="age" value="${values.age ?? '35'}" />
    <select id="travel-mode"><option selected value="${values.mode ?? 'solo'}"></option></select>
    <input id="lat" value="${values.lat ?? '60.17'}" />
    <input id="lon" value="${values.lon ?? '24.94'}" />
    <select id="count"><option selected value="${values.count ?? '9'}"></option></select>
  `;
}

describe('readForm', () => {
  beforeEach(() => setForm({}));

  it('returns a validated request payload', () => {
    const values = readForm(document);
    expect(values).toEqual({
      persona: { descriptor: 'Man', age: 35, travel_mode: 'solo' },
      lat: 60.17,
      lon: 24.94,
      count: 9,
    });
  });

  it('rejects an empty descriptor', () => {
    setForm({ descriptor: '  ' });
    expect(readForm(document)).toMatch(/traveler/i);
  });

  it('rejects out-of-range ages', () => {
    setForm({ age: '0' });
    expect(readForm(document)).toMatch(/age/i);
    setForm({ age: '121' });
    expect(readForm(document)).toMatch(/age/i);
  });

  it('rejects latitudes beyond the projection bound', () => {
    setForm({ lat: '86' });
    expect(readForm(document)).toMatch(/latitude/i);
  });

  it('ships the published persona presets', () => {
    expect(DESCRIPTOR_PRESETS).toContain('Transgender woman');
    expect(DESCRIPTOR_PRESETS).toContain('Homeless man');
    expect(DESCRIPTOR_PRESETS).toHaveLength(5);
  });
});
